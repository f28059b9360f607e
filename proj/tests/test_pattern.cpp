#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mbvqe/pattern.hpp"
#include "mbvqe/tableau.hpp"
#include "oracle.hpp"

using namespace mbvqe;

namespace {

oracle::Vec to_vec(const QuantumState &s) {
    oracle::Vec v(s.amplitudes().size());
    for (std::size_t i = 0; i < s.amplitudes().size(); ++i) v(i) = s.amplitudes()[i];
    return v;
}

QuantumState from_vec(const oracle::Vec &v) {
    int n = 0;
    while ((1 << n) < v.size()) ++n;
    return QuantumState(n, std::vector<cdouble>(v.data(), v.data() + v.size()));
}

std::string random_axis(int n, std::mt19937_64 &rng) {
    std::string s;
    for (int i = 0; i < n; ++i) s += "XYZ"[rng() % 3];
    return s;
}

// Worst overlap between p's output and u*in over every nonzero branch (all
// branches if few measurements, otherwise `sampled` random ones).
double worst_overlap(const Pattern &p, const oracle::Mat &u, const oracle::Vec &in, std::mt19937_64 &rng,
                     int sampled = 64) {
    const oracle::Vec want = u * in;
    const std::size_t m = p.order.size();
    double worst = 1.0;
    int tried = 0;
    auto check = [&](const std::vector<int> &outcomes) {
        try {
            const auto out = simulate_pattern(p, from_vec(in), outcomes);
            worst = std::min(worst, oracle::overlap(to_vec(out), want));
            ++tried;
        } catch (const std::runtime_error &) {
        }
    };
    if (m <= 8) {
        for (std::uint64_t b = 0; b < (std::uint64_t{1} << m); ++b) {
            std::vector<int> o(m);
            for (std::size_t i = 0; i < m; ++i) o[i] = b >> i & 1;
            check(o);
        }
    } else {
        for (int s = 0; s < sampled; ++s) {
            Rng r(rng());
            const auto out = simulate_pattern(p, from_vec(in), r);
            worst = std::min(worst, oracle::overlap(to_vec(out), want));
            ++tried;
        }
    }
    EXPECT_GT(tried, 0);
    return worst;
}

Pattern load_ea6(double theta) {
    std::ifstream f(std::string(MBVQE_DATA_DIR) + "/ea6.pat");
    EXPECT_TRUE(f.good());
    return parse_pattern(f, {{"theta", theta}});
}

// Wire-local pattern on `n` wires with `single` on wire w.
Pattern on_wire(const Pattern &single, int w, int n) {
    Pattern r = w == 0 ? single : identity_pattern(1);
    for (int k = 1; k < n; ++k) r = tensor(r, k == w ? single : identity_pattern(1));
    return r;
}

Pattern cx_pattern(int c, int t, int n) {
    // CX = H_t CZ H_t, H = J(0)
    Pattern cz = identity_pattern(n);
    cz.edges = {{std::min(c, t), std::max(c, t)}};
    Pattern r = concatenate(on_wire(j_pattern(0), t, n), cz);
    return concatenate(r, on_wire(j_pattern(0), t, n));
}

Pattern rz_pattern(int q, double theta, int n) {
    return concatenate(on_wire(j_pattern(theta), q, n), on_wire(j_pattern(0), q, n));
}

}  // namespace

TEST(Gadget, MatchesPauliRotationBothBranches) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    for (int n = 1; n <= 4; ++n) {
        for (int rep = 0; rep < 6; ++rep) {
            const std::string axis = random_axis(n, rng);
            const double theta = ang(rng);
            const Pattern p = gadget_pattern(PauliString(axis), theta);
            const auto u = oracle::pauli_rotation(axis, theta);
            for (int k = 0; k < 3; ++k) {
                EXPECT_NEAR(worst_overlap(p, u, oracle::random_state(n, rng), rng), 1.0, 1e-10) << axis;
            }
        }
    }
}

TEST(Gadget, SingleQubitZIsRz) {
    std::mt19937_64 rng(2);
    const Pattern p = gadget_pattern(PauliString("Z"), 0.83);
    EXPECT_NEAR(worst_overlap(p, oracle::rz(0.83), oracle::random_state(1, rng), rng), 1.0, 1e-12);
}

TEST(Gadget, ZeroAngleIsIdentity) {
    std::mt19937_64 rng(3);
    const Pattern p = gadget_pattern(PauliString("XYZ"), 0.0);
    EXPECT_NEAR(worst_overlap(p, oracle::Mat::Identity(8, 8), oracle::random_state(3, rng), rng), 1.0, 1e-12);
}

TEST(Gadget, GateReferenceMatchesRotation) {
    std::mt19937_64 rng(4);
    for (int n = 1; n <= 4; ++n) {
        const std::string axis = random_axis(n, rng);
        const DynamicCircuit c = gate_gadget_circuit(PauliString(axis), 1.1);
        const auto in = oracle::random_state(n, rng);
        const auto init = from_vec(in);
        const auto out = run_forced(c, {}, &init).state;
        EXPECT_NEAR(oracle::overlap(to_vec(out), oracle::pauli_rotation(axis, 1.1) * in), 1.0, 1e-12);
    }
}

TEST(Gadget, EntanglingCountNVersusTwoNMinusTwo) {
    for (int n = 3; n <= 8; ++n) {
        const PauliString axis(std::string(static_cast<std::size_t>(n), 'X'));
        const Pattern p = gadget_pattern(axis, 0.4);
        EXPECT_EQ(p.entangling_count(), static_cast<std::size_t>(n));
        EXPECT_EQ(compile_to_circuit(p).count_two_qubit(), static_cast<std::size_t>(n));
        EXPECT_EQ(gate_gadget_circuit(axis, 0.4).count_two_qubit(), static_cast<std::size_t>(2 * n - 2));
    }
}

TEST(Gadget, CompiledZ4HasConditionalZOnBody) {
    const DynamicCircuit c = compile_to_circuit(gadget_pattern(PauliString("ZZZZ"), 0.3));
    int cz = 0, measures = 0;
    std::vector<int> zs;
    for (const auto &ins : c.instructions()) {
        if (ins.kind == Instruction::Kind::Gate && ins.gate.type == GateType::CZ) ++cz;
        if (ins.kind == Instruction::Kind::Measure) {
            ++measures;
            EXPECT_EQ(ins.qubit, 4);
        }
        if (ins.kind == Instruction::Kind::Conditional) {
            EXPECT_EQ(ins.gate.type, GateType::Z);
            EXPECT_EQ(ins.condition, std::vector<int>{0});
            zs.push_back(ins.gate.qubits[0]);
        }
    }
    EXPECT_EQ(cz, 4);
    EXPECT_EQ(measures, 1);
    EXPECT_EQ(zs, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Gadget, SingleQubitCompilesToOneCzAndConditionalZ) {
    const DynamicCircuit c = compile_to_circuit(gadget_pattern(PauliString("Z"), 0.3));
    EXPECT_EQ(c.count_two_qubit(), 1u);
    int cond = 0;
    for (const auto &ins : c.instructions())
        if (ins.kind == Instruction::Kind::Conditional) ++cond;
    EXPECT_EQ(cond, 1);
}

TEST(Pattern, CompiledCircuitMatchesSimulation) {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 1 + static_cast<int>(rng() % 4);
        const Pattern p = gadget_pattern(PauliString(random_axis(n, rng)), 0.9 * rep);
        const DynamicCircuit c = compile_to_circuit(p);
        const auto in = from_vec(oracle::random_state(n, rng));
        const auto init = embed_input(p, in);
        for (int b = 0; b < 2; ++b) {
            const auto full = run_forced(c, {b}, &init).state;
            const auto a = extract_output(p, full);
            const auto s = simulate_pattern(p, in, std::vector<int>{b});
            EXPECT_NEAR(fidelity(a, s), 1.0, 1e-12);
        }
    }
}

TEST(Pattern, CompileRejectsUnreducedPattern) {
    EXPECT_THROW(compile_to_circuit(load_ea6(0.1)), std::invalid_argument);
}

TEST(Pattern, ConcatenateWithIdentity) {
    std::mt19937_64 rng(6);
    const Pattern g = gadget_pattern(PauliString("XZY"), 0.7);
    const auto u = oracle::pauli_rotation("XZY", 0.7);
    EXPECT_EQ(concatenate(g, identity_pattern(3)).num_qubits, 4);
    for (const Pattern &p : {concatenate(g, identity_pattern(3)), concatenate(identity_pattern(3), g)}) {
        EXPECT_NEAR(worst_overlap(p, u, oracle::random_state(3, rng), rng), 1.0, 1e-10);
    }
}

TEST(Pattern, ConcatenateSameAxisAddsAngles) {
    std::mt19937_64 rng(7);
    for (const std::string axis : {"ZZ", "XX", "YXZ"}) {
        const Pattern p = concatenate(gadget_pattern(PauliString(axis), 0.4), gadget_pattern(PauliString(axis), 0.5));
        const int n = static_cast<int>(axis.size());
        EXPECT_NEAR(worst_overlap(p, oracle::pauli_rotation(axis, 0.9), oracle::random_state(n, rng), rng), 1.0,
                    1e-10)
            << axis;
    }
}

TEST(Pattern, ConcatenateComposesRandomGadgets) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    for (int rep = 0; rep < 12; ++rep) {
        const int n = 1 + static_cast<int>(rng() % 3);
        const std::string a1 = random_axis(n, rng), a2 = random_axis(n, rng);
        const double t1 = ang(rng), t2 = ang(rng);
        const Pattern p = concatenate(gadget_pattern(PauliString(a1), t1), gadget_pattern(PauliString(a2), t2));
        const oracle::Mat u = oracle::pauli_rotation(a2, t2) * oracle::pauli_rotation(a1, t1);
        EXPECT_NEAR(worst_overlap(p, u, oracle::random_state(n, rng), rng), 1.0, 1e-10) << a1 << " " << a2;
    }
}

TEST(Pattern, JPatternIsHadamardTimesPhase) {
    std::mt19937_64 rng(9);
    for (double a : {0.0, M_PI / 2, M_PI, -M_PI / 2, 0.37}) {
        oracle::Mat d(2, 2);
        d << 1, 0, 0, std::polar(1.0, a);
        EXPECT_NEAR(worst_overlap(j_pattern(a), oracle::h() * d, oracle::random_state(1, rng), rng), 1.0, 1e-12) << a;
    }
}

TEST(Pattern, GflowOnLinearCluster) {
    // Three-qubit line, X on the first two: H twice, so identity.
    Pattern p;
    p.num_qubits = 3;
    p.inputs = {0};
    p.outputs = {2};
    p.edges = {{0, 1}, {1, 2}};
    p.measurements[0] = Measurement{};
    p.measurements[1] = Measurement{};
    derive_corrections(p);
    EXPECT_EQ(p.order, (std::vector<int>{0, 1}));
    std::mt19937_64 rng(10);
    EXPECT_NEAR(worst_overlap(p, oracle::Mat::Identity(2, 2), oracle::random_state(1, rng), rng), 1.0, 1e-12);
}

TEST(Pattern, Ea6GoldenReduction) {
    const Pattern p = load_ea6(0.3);
    EXPECT_EQ(p.num_qubits, 15);
    const Reduction r = reduce(p);
    EXPECT_EQ(r.eliminated, 11);
    EXPECT_EQ(r.pattern.num_qubits, 4);
    EXPECT_EQ(r.pattern.edges, (std::vector<std::pair<int, int>>{{0, 3}, {1, 3}, {2, 3}}));
    ASSERT_EQ(r.prefix.size(), 4u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(r.prefix[i].type, GateType::CZ);
        EXPECT_EQ(r.prefix[i].qubits, (std::vector<int>{i, 3}));
    }
    EXPECT_EQ(r.prefix[3].type, GateType::H);
    EXPECT_EQ(r.prefix[3].qubits, std::vector<int>{3});
}

TEST(Pattern, Ea6ReducedMatchesOracleOnThetaGrid) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 16; ++i) {
        const double theta = -M_PI + 2 * M_PI * i / 16;
        const Reduction r = reduce(load_ea6(theta));
        EXPECT_NEAR(worst_overlap(r.pattern, oracle::pauli_rotation("ZZZ", theta), oracle::random_state(3, rng), rng),
                    1.0, 1e-10);
    }
}

TEST(Pattern, Ea6FullPatternMatchesOracle) {
    std::mt19937_64 rng(13);
    for (double theta : {0.4, -2.2}) {
        const Pattern p = load_ea6(theta);
        EXPECT_NEAR(worst_overlap(p, oracle::pauli_rotation("ZZZ", theta), oracle::random_state(3, rng), rng, 12), 1.0,
                    1e-10);
    }
}

TEST(Pattern, Ea6OnPlusInputsLeavesStarStabilizers) {
    const Pattern p = load_ea6(0.0);
    StabilizerTableau t(15);
    for (int q = 0; q < 15; ++q) t.h(q);
    for (auto [a, b] : p.edges) t.cz(a, b);
    for (int q = 0; q < 11; ++q) t.measure(q, 'X', 0);
    for (int q = 10; q >= 0; --q) t = t.without_qubit(q);
    const auto want = StabilizerTableau::from_stabilizers(
        {parse_signed_pauli("+XXII"), parse_signed_pauli("+XIXI"), parse_signed_pauli("+XIIX"),
         parse_signed_pauli("+ZZZZ")});
    EXPECT_TRUE(t.same_state(want)) << t.to_text();
}

TEST(Pattern, CxChainReducesToSameGadget) {
    const double theta = 0.61;
    Pattern chain = cx_pattern(0, 1, 3);
    chain = concatenate(chain, cx_pattern(1, 2, 3));
    chain = concatenate(chain, rz_pattern(2, theta, 3));
    chain = concatenate(chain, cx_pattern(1, 2, 3));
    chain = concatenate(chain, cx_pattern(0, 1, 3));
    EXPECT_EQ(chain.num_qubits, 13);
    std::mt19937_64 rng(14);
    const auto u = oracle::pauli_rotation("ZZZ", theta);
    EXPECT_NEAR(worst_overlap(chain, u, oracle::random_state(3, rng), rng, 16), 1.0, 1e-10);

    const Reduction rc = reduce(chain);
    const Reduction re = reduce(load_ea6(theta));
    EXPECT_EQ(rc.pattern.num_qubits, 4);
    EXPECT_EQ(rc.pattern.edges, re.pattern.edges);
    EXPECT_NEAR(worst_overlap(rc.pattern, u, oracle::random_state(3, rng), rng), 1.0, 1e-10);
}

TEST(Pattern, ReductionOfRandomGadgetPairs) {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    for (int rep = 0; rep < 8; ++rep) {
        const int n = 1 + static_cast<int>(rng() % 3);
        const std::string a1 = random_axis(n, rng), a2 = random_axis(n, rng);
        const double t1 = ang(rng), t2 = ang(rng);
        const Pattern p = concatenate(gadget_pattern(PauliString(a1), t1), gadget_pattern(PauliString(a2), t2));
        const Reduction r = reduce(p);
        for (const auto &[q, m] : r.pattern.measurements) EXPECT_TRUE(!m.is_pauli() || r.pattern.is_input(q));
        compile_to_circuit(r.pattern);
        const oracle::Mat u = oracle::pauli_rotation(a2, t2) * oracle::pauli_rotation(a1, t1);
        double worst = 1.0;
        for (int k = 0; k < 20; ++k) {
            worst = std::min(worst, worst_overlap(r.pattern, u, oracle::random_state(n, rng), rng));
        }
        EXPECT_NEAR(worst, 1.0, 1e-10) << a1 << " " << a2;
    }
}

TEST(Pattern, ReduceLeavesAdaptiveOnlyPatternAlone) {
    const Pattern p = gadget_pattern(PauliString("ZZZ"), 0.2);
    const Reduction r = reduce(p);
    EXPECT_EQ(r.eliminated, 0);
    EXPECT_EQ(to_text(r.pattern), to_text(p));
}

TEST(Pattern, TextRoundTrip) {
    const Pattern p = concatenate(gadget_pattern(PauliString("XYZ"), 0.123456789), gadget_pattern(PauliString("ZZX"), -2.5));
    const std::string text = to_text(p);
    std::istringstream in(text);
    const Pattern q = parse_pattern(in);
    EXPECT_EQ(to_text(q), text);
    EXPECT_EQ(q.measurements.at(q.order[0]).angle, p.measurements.at(p.order[0]).angle);
}

TEST(Pattern, ParseAngles) {
    std::istringstream in("QUBITS\nn 2\ninputs 1\noutputs 2\nEDGES\n1 2\nMEASURE\n1 R -pi/4\nBYPRODUCT\n2 X 1\nORDER\n1\n");
    const Pattern p = parse_pattern(in);
    EXPECT_DOUBLE_EQ(p.measurements.at(0).angle, -M_PI / 4);
}

TEST(Pattern, ParseErrors) {
    auto parse = [](const std::string &s) {
        std::istringstream in(s);
        return parse_pattern(in);
    };
    EXPECT_THROW(parse("QUBITS\nn 2\ninputs 3\n"), std::invalid_argument);
    EXPECT_THROW(parse("QUBITS\nn 2\ninputs 1\noutputs 2\nEDGES\n1 2\nMEASURE\n1 R phi\n"), std::invalid_argument);
    EXPECT_THROW(parse("EDGES\n1 2\n"), std::invalid_argument);
    // qubit 2 depends on 3, which is measured later
    EXPECT_THROW(parse("QUBITS\nn 4\ninputs 1\noutputs 4\nEDGES\n1 2\n2 3\n3 4\nMEASURE\n1 X\n2 X flip 3\n3 X\n"
                       "BYPRODUCT\nORDER\n1 2 3\n"),
                 std::invalid_argument);
}

TEST(Pattern, ValidateRejectsMeasuredOutput) {
    Pattern p = gadget_pattern(PauliString("Z"), 0.1);
    p.measurements[0] = Measurement{};
    p.order.push_back(0);
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Pattern, BranchesAgreeForLongChains) {
    std::mt19937_64 rng(16);
    Pattern p = gadget_pattern(PauliString("XY"), 0.3);
    p = concatenate(p, gadget_pattern(PauliString("ZX"), 1.3));
    p = concatenate(p, gadget_pattern(PauliString("YY"), -0.8));
    const oracle::Mat u = oracle::pauli_rotation("YY", -0.8) * oracle::pauli_rotation("ZX", 1.3) * oracle::pauli_rotation("XY", 0.3);
    EXPECT_NEAR(worst_overlap(p, u, oracle::random_state(2, rng), rng), 1.0, 1e-10);
}

TEST(Pattern, Z4GadgetCountsFollowBornRule) {
    // Z(x)4 gadget on |++++>, body read in the X basis: all-plus with
    // probability cos^2(theta/2), all-minus otherwise.
    const double theta = 1.2;
    const Pattern g = gadget_pattern(PauliString("ZZZZ"), theta);
    DynamicCircuit c(5, 0);
    for (int q = 0; q < 4; ++q) c.h(q);
    std::vector<int> map{0, 1, 2, 3, 4};
    append_pattern(c, g, map, false);
    for (int q = 0; q < 4; ++q) {
        c.h(q);
        c.measure(q, c.add_cbit());
    }
    Rng rng(17);
    const long shots = 20000;
    const Counts counts = run_counts(c, shots, NoiseModel{}, rng);
    long plus = 0, minus = 0;
    for (const auto &[k, v] : counts) {
        const std::string body = k.substr(1);
        if (body == "0000") plus += v;
        else if (body == "1111") minus += v;
        else ADD_FAILURE() << "unexpected outcome " << k;
    }
    const double p = std::pow(std::cos(theta / 2), 2);
    const double sigma = std::sqrt(shots * p * (1 - p));
    EXPECT_LT(std::abs(plus - shots * p), 3 * sigma);
    EXPECT_EQ(plus + minus, shots);
}
