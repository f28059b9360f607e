// One PASS/FAIL line per acceptance criterion. Exit status counts failures
// outside the --expect-fail list.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "mbvqe/estimation.hpp"
#include "mbvqe/models.hpp"
#include "mbvqe/pattern.hpp"
#include "mbvqe/vqe.hpp"
#include "oracle.hpp"

using namespace mbvqe;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

QuantumState from_vec(const oracle::Vec &v) {
    int n = 0;
    while ((1 << n) < v.size()) ++n;
    return QuantumState(n, std::vector<cdouble>(v.data(), v.data() + v.size()));
}

oracle::Vec to_vec(const QuantumState &s) {
    oracle::Vec v(s.amplitudes().size());
    for (std::size_t i = 0; i < s.amplitudes().size(); ++i) v(i) = s.amplitudes()[i];
    return v;
}

std::vector<int> iota_vec(int n) {
    std::vector<int> r(n);
    for (int i = 0; i < n; ++i) r[i] = i;
    return r;
}

// Perth-like readout flips, about 2%.
NoiseModel device_noise() {
    NoiseModel nm;
    nm.two_qubit_depolarizing = 0.01;
    nm.readout_all = {0.02, 0.02};
    nm.readout[0] = {0.0252, 0.0306};
    nm.readout[1] = {0.018, 0.0234};
    nm.readout[2] = {0.018, 0.0208};
    nm.readout[3] = {0.0152, 0.0174};
    return nm;
}

Outcome gadget_equivalence() {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    double worst = 1.0, branch_gap = 0.0;
    for (int n = 1; n <= 4; ++n) {
        for (int k = 0; k < 20; ++k) {
            std::string axis;
            for (int i = 0; i < n; ++i) axis += k < 3 ? "XYZ"[k] : "XYZ"[rng() % 3];
            const double theta = ang(rng);
            const DynamicCircuit c = compile_to_circuit(gadget_pattern(PauliString(axis), theta));
            const oracle::Mat u = oracle::pauli_rotation(axis, theta);
            for (int s = 0; s < 20; ++s) {
                const oracle::Vec in = oracle::random_state(n, rng);
                const oracle::Vec want = u * in;
                const QuantumState init = from_vec(in).tensor(QuantumState(1));
                QuantumState outs[2];
                for (int o = 0; o < 2; ++o) {
                    outs[o] = run_forced(c, {o}, &init).state;
                    worst = std::min(worst, reduced_fidelity(outs[o], iota_vec(n), from_vec(want)));
                }
                // ancilla is the last qubit, so its value sits in the low amplitude bit
                std::vector<cdouble> data(std::size_t(1) << n, 0.0);
                for (std::size_t j = 0; j < outs[0].amplitudes().size(); ++j) data[j >> 1] += outs[0].amplitudes()[j];
                QuantumState d0(n, data);
                d0.normalize();
                branch_gap = std::max(branch_gap, 1 - reduced_fidelity(outs[1], iota_vec(n), d0));
            }
        }
    }
    return {worst >= 1 - 1e-10 && branch_gap <= 1e-10,
            "worst fidelity " + fmt("%.15f", worst) + ", branch mismatch " + fmt("%.1e", branch_gap)};
}

Pattern load_ea6(double theta) {
    std::ifstream f(std::string(MBVQE_DATA_DIR) + "/ea6.pat");
    if (!f) throw std::runtime_error("missing ea6.pat");
    return parse_pattern(f, {{"theta", theta}});
}

Outcome pattern_reduction() {
    const Reduction r0 = reduce(load_ea6(0.3));
    bool shape = r0.pattern.num_qubits == 4 && load_ea6(0.3).num_qubits == 15 && r0.prefix.size() == 4;
    if (shape) {
        for (int i = 0; i < 3; ++i)
            shape &= r0.prefix[i].type == GateType::CZ && r0.prefix[i].qubits == std::vector<int>{i, 3};
        shape &= r0.prefix[3].type == GateType::H && r0.prefix[3].qubits == std::vector<int>{3};
    }
    std::mt19937_64 rng(202);
    double worst = 1.0;
    for (int i = 0; i < 16; ++i) {
        const double theta = -M_PI + 2 * M_PI * i / 16;
        const Pattern p = reduce(load_ea6(theta)).pattern;
        const oracle::Mat u = oracle::pauli_rotation("ZZZ", theta);
        for (int s = 0; s < 4; ++s) {
            const oracle::Vec in = oracle::random_state(3, rng);
            for (int o = 0; o < (1 << p.order.size()); ++o) {
                std::vector<int> outcomes(p.order.size());
                for (std::size_t b = 0; b < outcomes.size(); ++b) outcomes[b] = o >> b & 1;
                worst = std::min(worst, oracle::overlap(to_vec(simulate_pattern(p, from_vec(in), outcomes)), u * in));
            }
        }
    }
    return {shape && worst >= 1 - 1e-10,
            std::string("15 -> ") + std::to_string(r0.pattern.num_qubits) + " qubits, star prefix " +
                (shape ? "ok" : "wrong") + ", worst overlap " + fmt("%.15f", worst)};
}

Outcome reference_values() {
    bool ok = true;
    std::string d;
    double z2_err = 0;
    for (double l : {0.5, 0.63, 0.85, 1.12, 1.52, 1.98, 2.33, 2.65, 2.88, 3.3})
        z2_err = std::max(z2_err, std::abs(exact_diagonalize(z2_hamiltonian(l), 2).e0 + std::sqrt(16 / (l * l) + l * l)));
    ok &= z2_err <= 1e-10;
    d += "z2 " + fmt("%.1e", z2_err);

    const double ms[] = {-1, -0.5, -0.2, -0.05, 0.01, 0.05, 0.1, 0.2, 0.5, 1};
    const double su3_e0[] = {-6.259, -3.395, -1.791, -1.122, -0.924, -0.822, -0.723, -0.591, -0.395, -0.259};
    const double su3_eg[] = {2.878, 1.771, 0.965, 0.639, 0.610, 0.639, 0.719, 0.965, 1.771, 2.878};
    double su3_err = 0;
    for (int i = 0; i < 10; ++i) {
        const Spectrum s = exact_diagonalize(su3_hamiltonian(ms[i], 0.8), 3);
        su3_err = std::max({su3_err, std::abs(s.e0 - su3_e0[i]), std::abs(s.gap - su3_eg[i])});
    }
    ok &= su3_err <= 5e-4;
    d += ", su3 " + fmt("%.1e", su3_err);

    const double xs[] = {0.01, std::pow(10, -1.5), 0.1, std::pow(10, -0.5), 1, 1.5, 2, 3, 4, 6, 8, 10};
    const double pc_e0[] = {-8.001, -8.009, -8.083, -8.632, -11.465, -13.822, -16.245, -23.083, -30.062, -44.042, -58.031, -72.025};
    const double pc_eg[] = {1.991, 1.977, 1.983, 2.316, 2.217, 1.156, 0.120, 1.918, 3.938, 7.959, 11.969, 15.975};
    double pc_err = 0;
    for (int i = 0; i < 12; ++i) {
        const Spectrum s = exact_diagonalize(planar_code_hamiltonian(2, 1, xs[i]), 3);
        pc_err = std::max({pc_err, std::abs(s.e0 - pc_e0[i]), std::abs(s.gap - pc_eg[i])});
    }
    ok &= pc_err <= 5e-4;
    d += ", pc " + fmt("%.1e", pc_err);

    const Spectrum lih = exact_diagonalize(lih_hamiltonian(), 3);
    QuantumState ref(4);
    ref.amplitudes()[0] = 0;
    ref.amplitudes()[0b0011] = 0.9877;
    ref.amplitudes()[0b1100] = -0.1154;
    ref.normalize();
    const double overlap = fidelity(ref, lih.ground);
    ok &= std::abs(lih.e0 + 7.8811) <= 5e-3 && overlap >= 0.999;
    d += ", lih E0 " + fmt("%.5f", lih.e0) + " overlap " + fmt("%.4f", overlap) + " (need 0.999)";
    return {ok, d};
}

Outcome perturbation() {
    bool ok = true;
    std::string d;
    for (auto [M, N, want] : {std::tuple{1, 1, -8.0}, std::tuple{2, 1, -37.0 / 4}}) {
        const double e0 = pc_perturbative_energy(M, N, 0.0);
        double sxy = 0, sxx = 0;
        for (int k = 1; k <= 10; ++k) {
            const double xi = 0.001 * k, x = xi * xi;
            sxy += x * (pc_perturbative_energy(M, N, xi) - e0);
            sxx += x * x;
        }
        const double coeff = sxy / sxx;
        double c3 = 0;
        for (double xi : {0.01, 0.02, 0.05, 0.1})
            c3 = std::max(c3, std::abs(pc_perturbative_energy(M, N, xi) -
                                       exact_diagonalize(planar_code_hamiltonian(M, N, xi), 2).e0) /
                                  (xi * xi * xi));
        ok &= std::abs(coeff - want) <= 1e-9 && c3 <= 50;
        if (!d.empty()) d += "; ";
        d += std::to_string(M) + "x" + std::to_string(N) + ": coeff " + fmt("%.12f", coeff) + ", C " + fmt("%.3g", c3);
    }
    return {ok, d};
}

struct SweepResult {
    int misses = 0;
    double worst_ratio = 0;
    std::string missed;
};

SweepResult sweep(const std::vector<double> &grid, const std::vector<double> &thresholds,
                  const std::function<Hamiltonian(double)> &model, const Ansatz &ansatz, const OptimizerConfig &oc,
                  const std::function<double(double, const Spectrum &)> &gap = nullptr) {
    SweepResult r;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Hamiltonian h = model(grid[i]);
        const Spectrum s = exact_diagonalize(h, 3);
        VqeOptions o;
        o.optimizer = oc;
        const VQERunRecord rec = run_vqe(h, ansatz, o, &s, gap ? gap(grid[i], s) : 0.0);
        const double ratio = rec.rel_err / thresholds[i];
        r.worst_ratio = std::max(r.worst_ratio, ratio);
        if (ratio > 1) {
            ++r.misses;
            r.missed += " " + fmt("%g", grid[i]) + "(" + fmt("%.3f", rec.rel_err) + ">" + fmt("%.3f", thresholds[i]) + ")";
        }
    }
    return r;
}

Outcome noiseless_vqe() {
    OptimizerConfig local;
    local.max_iters = 100;
    const SweepResult z2 = sweep({0.5, 0.63, 0.85, 1.12, 1.52, 1.98, 2.33, 2.65, 2.88, 3.3},
                                 {0.148, 0.109, 0.103, 0.188, 0.296, 0.464, 0.573, 0.904, 1.282, 2.569},
                                 z2_hamiltonian, z2_ansatz(), local);
    const SweepResult su3 = sweep({-1, -0.5, -0.2, -0.05, 0.01, 0.05, 0.1, 0.2, 0.5, 1},
                                  {0.00673, 0.0992, 0.171, 0.266, 0.264, 0.311, 0.214, 0.214, 0.0363, 0.0332},
                                  [](double m) { return su3_hamiltonian(m, 0.8); }, su3_ansatz(), local);
    OptimizerConfig direct;
    direct.method = OptimizerConfig::Method::Direct;
    direct.global_iters = 50;
    direct.max_iters = 50;
    // At xi = 2 the two lowest levels nearly cross; errors there are quoted against E2 - E1.
    const SweepResult pc = sweep(
        {0.01, std::pow(10, -1.5), 0.1, std::pow(10, -0.5), 1, 1.5, 2, 3, 4, 6, 8, 10},
        {0.126, 0.106, 0.312, 0.312, 0.264, 0.116, 0.402, 0.263, 0.133, 0.502, 0.263, 0.556},
        [](double xi) { return planar_code_hamiltonian(2, 1, xi); }, graph_modified_ansatz(pc_graph_ansatz(2, 1, 1)),
        direct, [](double xi, const Spectrum &s) { return xi == 2 ? s.e2 - s.e1 : 0.0; });
    std::string d = "z2 worst/threshold " + fmt("%.3f", z2.worst_ratio) + ", su3 " + fmt("%.3f", su3.worst_ratio) +
                    ", pc " + fmt("%.3f", pc.worst_ratio);
    const std::string missed = z2.missed + su3.missed + pc.missed;
    if (!missed.empty()) d += "; missed:" + missed;
    return {z2.misses + su3.misses + pc.misses == 0, d};
}

Outcome layer_trend() {
    const Hamiltonian h = lih_hamiltonian();
    const Spectrum s = exact_diagonalize(h, 3);
    double f[2];
    for (int L = 1; L <= 2; ++L) {
        VqeOptions o;
        o.optimizer.max_iters = 250;
        f[L - 1] = run_vqe(h, lih_ansatz(L), o, &s).fidelity;
    }
    return {f[1] > f[0] && f[1] >= 0.85, "F(L=1) " + fmt("%.4f", f[0]) + ", F(L=2) " + fmt("%.4f", f[1])};
}

Outcome mitigation_statistics() {
    const NoiseModel nm = device_noise();
    std::string d;

    // (a) readout mitigation on the eight three-qubit basis states
    int within = 0, total = 0;
    {
        Rng crng(derive_seed(7, 0));
        const CalibrationMatrix cal = build_calibration_matrix(3, nm, 100000, crng);
        MitigationConfig mit;
        mit.readout = true;
        EstimateOptions eo;
        eo.calibration = &cal;
        for (int b = 0; b < 8; ++b) {
            DynamicCircuit c(3, 0);
            for (int q = 0; q < 3; ++q)
                if (b >> (2 - q) & 1) c.x(q);
            for (int q = 0; q < 3; ++q) {
                const Hamiltonian z(3, {{1.0, PauliString::single(3, q, 'Z')}});
                Rng rng(derive_seed(8, b * 3 + q));
                const EstimateResult r = estimate_energy(z, c, 10000, nm, mit, rng, eo);
                const double want = (b >> (2 - q) & 1) ? -1.0 : 1.0;
                within += std::abs(r.mean - want) <= 3 * std::sqrt(r.variance) + 1e-12;
                ++total;
            }
        }
    }
    const bool a = within == total;
    d += "(a) " + std::to_string(within) + "/" + std::to_string(total) + " within 3 sigma";

    // (b) self-mitigation against raw on the Z2 gadget circuit
    int wins = 0;
    {
        const Hamiltonian h = z2_hamiltonian(1.0);
        VqeOptions o;
        const Ansatz an = z2_ansatz();
        const DynamicCircuit c = an.circuit(run_vqe(h, an, o).theta_opt);
        const double exact = exact_energy(h, c, an.reg());
        EstimateOptions eo;
        eo.reg = an.reg();
        MitigationConfig self;
        self.self_mitigation = true;
        for (int s = 0; s < 100; ++s) {
            Rng r1(derive_seed(9, s)), r2(derive_seed(10, s));
            const double raw = estimate_energy(h, c, 10000, nm, {}, r1, eo).mean;
            const double mit = estimate_energy(h, c, 10000, nm, self, r2, eo).mean;
            wins += std::abs(mit - exact) < std::abs(raw - exact);
        }
    }
    const bool b = wins >= 90;
    d += "; (b) " + std::to_string(wins) + "/100 wins";

    // (c) predicted sigma against the spread over seeds
    bool c_ok = true;
    d += "; (c) ratios";
    struct Bench {
        const char *name;
        Hamiltonian h;
        Ansatz a;
    };
    const Ansatz z2a = z2_ansatz(), su3a = su3_ansatz(), pca = graph_modified_ansatz(pc_graph_ansatz(2, 1, 1)),
                 liha = lih_ansatz(1);
    const std::vector<Bench> benches = {{"z2", z2_hamiltonian(1.0), z2a},
                                        {"su3", su3_hamiltonian(0.01, 0.8), su3a},
                                        {"pc", planar_code_hamiltonian(2, 1, 1.0), pca},
                                        {"lih", lih_hamiltonian(), liha}};
    for (const Bench &bench : benches) {
        std::mt19937_64 prng(303);
        std::uniform_real_distribution<double> u(0, 2 * M_PI);
        std::vector<double> theta(bench.a.num_params);
        for (double &t : theta) t = u(prng);
        const DynamicCircuit c = bench.a.circuit(theta);
        EstimateOptions eo;
        eo.reg = bench.a.reg();
        double sum = 0, sum2 = 0, pred = 0;
        const int seeds = 100;
        for (int s = 0; s < seeds; ++s) {
            Rng rng(derive_seed(11, s));
            const EstimateResult r = estimate_energy(bench.h, c, 2000, nm, {}, rng, eo);
            sum += r.mean;
            sum2 += r.mean * r.mean;
            pred += std::sqrt(r.variance);
        }
        const double mean = sum / seeds;
        const double emp = std::sqrt((sum2 - seeds * mean * mean) / (seeds - 1));
        const double ratio = (pred / seeds) / emp;
        c_ok &= ratio >= 0.8 && ratio <= 1.25;
        d += std::string(" ") + bench.name + " " + fmt("%.3f", ratio);
    }
    return {a && b && c_ok, d};
}

Outcome resource_counts() {
    bool ok = true;
    std::string d;
    for (int n = 3; n <= 8; ++n) {
        const PauliString axis(std::string(n, 'Z'));
        const std::size_t mb = compile_to_circuit(gadget_pattern(axis, 0.4)).count_two_qubit();
        const std::size_t ans = gadget_stack_ansatz(n, 1, {axis}).entangling_count();
        const std::size_t gate = gate_gadget_circuit(axis, 0.4).count_two_qubit();
        ok &= mb == static_cast<std::size_t>(n) && ans == mb && gate == static_cast<std::size_t>(2 * n - 2);
        d += " n=" + std::to_string(n) + ":" + std::to_string(mb) + "/" + std::to_string(gate);
    }
    return {ok, "gadget/gate entanglers" + d};
}

}  // namespace

int main(int argc, char **argv) {
    std::set<int> expected;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--expect-fail" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string t; std::getline(ss, t, ',');) expected.insert(std::stoi(t));
        } else {
            std::fprintf(stderr, "usage: %s [--expect-fail 3,6]\n", argv[0]);
            return 2;
        }
    }
    const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
        {"gadget-unitary equivalence", gadget_equivalence},
        {"pattern reduction golden", pattern_reduction},
        {"exact reference values", reference_values},
        {"second-order perturbation", perturbation},
        {"noiseless VQE against hardware errors", noiseless_vqe},
        {"multi-layer gadget trend", layer_trend},
        {"mitigation statistics", mitigation_statistics},
        {"resource counts", resource_counts},
    };
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool known = expected.count(id) > 0;
        std::printf("%d %s %s: %s [%.1fs]%s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str(), secs,
                    !o.pass && known ? " (expected)" : "");
        std::fflush(stdout);
        unexpected += !o.pass && !known;
    }
    return unexpected;
}
