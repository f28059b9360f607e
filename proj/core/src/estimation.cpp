#include "mbvqe/estimation.hpp"

#include <bit>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mbvqe/clifford.hpp"

namespace mbvqe {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2;

std::vector<int> default_reg(std::size_t n, const std::vector<int> &reg) {
    if (!reg.empty()) {
        if (reg.size() != n) throw std::invalid_argument("register size mismatch");
        return reg;
    }
    std::vector<int> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = static_cast<int>(i);
    return r;
}

int parity(std::uint64_t x) { return __builtin_popcountll(x) & 1; }

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd &v) {
    std::vector<double> u(v.data(), v.data() + v.size());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, tau = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        cum += u[i];
        const double t = (cum - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0) tau = t;
    }
    return (v.array() - tau).max(0.0).matrix();
}

int snap_quarter(double angle) {
    const long k = std::lround(angle / kHalfPi);
    return static_cast<int>(((k % 4) + 4) % 4);
}

// Time-ordered {H,S} word for a Clifford-angle rotation, up to phase.
std::string rotation_word(GateType t, double angle) {
    const std::string sk(static_cast<std::size_t>(snap_quarter(angle)), 'S');
    if (std::abs(angle - kHalfPi * std::round(angle / kHalfPi)) > 1e-9)
        throw std::invalid_argument("back_propagate: rotation angle is not a multiple of pi/2");
    switch (t) {
        case GateType::RZ: return sk;
        case GateType::RX: return "H" + sk + "H";
        case GateType::RY: return "SSSH" + sk + "HS";
        default: break;
    }
    throw std::logic_error("rotation_word: not a rotation");
}

std::string gate_word(const Gate &g) {
    switch (g.type) {
        case GateType::H: return "H";
        case GateType::S: return "S";
        case GateType::X: return "HSSH";
        case GateType::Y: return "SSHSSH";  // Z then X
        case GateType::Z: return "SS";
        case GateType::RX:
        case GateType::RY:
        case GateType::RZ: return rotation_word(g.type, g.param);
        default: break;
    }
    throw std::logic_error("gate_word: two-qubit gate");
}

// Signed Pauli with phase tracked as a power of i.
struct PhasedPauli {
    int ipow = 0;
    PauliString p;
};

void mul_right(PhasedPauli &a, const PhasedPauli &b) {
    auto [ph, prod] = multiply(a.p, b.p);
    int k = 0;
    if (std::abs(ph - cdouble(0, 1)) < 1e-9) k = 1;
    else if (std::abs(ph + 1.0) < 1e-9) k = 2;
    else if (std::abs(ph - cdouble(0, -1)) < 1e-9) k = 3;
    a.ipow = (a.ipow + b.ipow + k) % 4;
    a.p = prod;
}

// G^dag P G for self-inverse two-qubit G given images of X and Z on each leg.
PhasedPauli conj_two(const PhasedPauli &in, int a, int b, bool is_cx) {
    const std::size_t n = in.p.size();
    auto img = [&](int q, char op) {
        PhasedPauli r{0, PauliString(n)};
        r.p.set(static_cast<std::size_t>(q), op);
        if (is_cx) {
            if (q == a && op == 'X') r.p.set(static_cast<std::size_t>(b), 'X');
            if (q == b && op == 'Z') r.p.set(static_cast<std::size_t>(a), 'Z');
        } else if (op == 'X') {
            r.p.set(static_cast<std::size_t>(q == a ? b : a), 'Z');
        }
        return r;
    };
    PhasedPauli out{in.ipow, PauliString(n)};
    for (std::size_t q = 0; q < n; ++q) {
        const char c = in.p[q];
        if (static_cast<int>(q) != a && static_cast<int>(q) != b) {
            out.p.set(q, c);
            continue;
        }
    }
    for (int q : {a, b}) {
        const char c = in.p[static_cast<std::size_t>(q)];
        // Y = i X Z
        if (c == 'X' || c == 'Y') mul_right(out, img(q, 'X'));
        if (c == 'Z' || c == 'Y') mul_right(out, img(q, 'Z'));
        if (c == 'Y') out.ipow = (out.ipow + 1) % 4;
    }
    return out;
}

SignedPauli to_signed(const PhasedPauli &p) {
    if (p.ipow % 2) throw std::logic_error("back_propagate: non-Hermitian image");
    return {p.ipow == 2, p.p};
}

bool is_dynamic(const DynamicCircuit &c) {
    for (const auto &in : c.instructions())
        if (in.kind != Instruction::Kind::Gate) return true;
    return false;
}

SignedPauli back_propagate_unitary(const DynamicCircuit &c, const PauliString &full) {
    PhasedPauli cur{0, full};
    const auto &ins = c.instructions();
    for (auto it = ins.rbegin(); it != ins.rend(); ++it) {
        const Gate &g = it->gate;
        if (g.type == GateType::CZ || g.type == GateType::CX) {
            cur = conj_two(cur, g.qubits[0], g.qubits[1], g.type == GateType::CX);
            continue;
        }
        const int q = g.qubits[0];
        const char c = cur.p[static_cast<std::size_t>(q)];
        if (c == 'I') continue;
        const auto [sign, op] = SingleQubitClifford::from_word(gate_word(g)).inverse().conjugate(c);
        cur.p.set(static_cast<std::size_t>(q), op);
        if (sign < 0) cur.ipow = (cur.ipow + 2) % 4;
    }
    return to_signed(cur);
}

SignedPauli back_propagate_dense(const DynamicCircuit &c, const std::vector<int> &reg, const PauliString &p) {
    const int nq = c.num_qubits();
    const int r = static_cast<int>(reg.size());
    if (r > 8 || nq + r > 20) throw std::invalid_argument("back_propagate: register too large for dynamic circuit");
    const int N = nq + r;
    DynamicCircuit big(N, c.num_cbits());
    big.instructions() = c.instructions();

    const std::size_t dimr = std::size_t{1} << r;
    auto index_of = [&](std::uint64_t y, std::uint64_t x, std::uint64_t anc) {
        std::uint64_t idx = anc;
        for (int i = 0; i < r; ++i) {
            const std::uint64_t bit_y = (y >> (r - 1 - i)) & 1, bit_x = (x >> (r - 1 - i)) & 1;
            idx |= bit_y << (N - 1 - reg[static_cast<std::size_t>(i)]);
            idx |= bit_x << (N - 1 - (nq + i));
        }
        return idx;
    };
    std::vector<cdouble> amps(std::size_t{1} << N, 0.0);
    for (std::uint64_t x = 0; x < dimr; ++x) amps[index_of(x, x, 0)] = 1.0 / std::sqrt(static_cast<double>(dimr));
    const QuantumState init(N, amps);

    std::uint64_t reg_mask = 0;
    for (int i = 0; i < r; ++i) {
        reg_mask |= std::uint64_t{1} << (N - 1 - reg[static_cast<std::size_t>(i)]);
        reg_mask |= std::uint64_t{1} << (N - 1 - (nq + i));
    }

    Eigen::MatrixXcd U;
    for (const auto &b : enumerate_branches(big, &init)) {
        if (b.probability < 1e-12) continue;
        const auto &a = b.state.amplitudes();
        std::size_t best = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (std::norm(a[i]) > std::norm(a[best])) best = i;
        const std::uint64_t anc = best & ~reg_mask;
        Eigen::MatrixXcd M(dimr, dimr);
        double w = 0.0;
        for (std::uint64_t y = 0; y < dimr; ++y)
            for (std::uint64_t x = 0; x < dimr; ++x) {
                M(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = a[index_of(y, x, anc)];
                w += std::norm(a[index_of(y, x, anc)]);
            }
        if (std::abs(w - 1.0) > 1e-9) throw std::invalid_argument("back_propagate: register entangled with ancillas");
        M *= std::sqrt(static_cast<double>(dimr));
        if (U.size() == 0) {
            U = M;
        } else {
            const cdouble ov = (U.adjoint() * M).trace() / static_cast<double>(dimr);
            if (std::abs(std::abs(ov) - 1.0) > 1e-9) throw std::invalid_argument("back_propagate: circuit is not deterministic");
        }
    }
    if (U.size() == 0) throw std::logic_error("back_propagate: no branches");

    const Eigen::MatrixXcd P = U.adjoint() * to_matrix(p) * U;
    // A Pauli maps column 0 to a single row; that row is the X mask.
    Eigen::Index row0 = 0;
    P.col(0).cwiseAbs().maxCoeff(&row0);
    const auto xmask = static_cast<std::uint64_t>(row0);
    std::uint64_t zmask = 0;
    for (int i = 0; i < r; ++i) {
        const std::uint64_t c = std::uint64_t{1} << (r - 1 - i);
        const cdouble ratio = P(static_cast<Eigen::Index>(c ^ xmask), static_cast<Eigen::Index>(c)) / P(row0, 0);
        if (ratio.real() < 0) zmask |= c;
    }
    PauliString s(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        const std::uint64_t c = std::uint64_t{1} << (r - 1 - i);
        const bool hx = xmask & c, hz = zmask & c;
        s.set(static_cast<std::size_t>(i), hx ? (hz ? 'Y' : 'X') : (hz ? 'Z' : 'I'));
    }
    const Eigen::MatrixXcd S = to_matrix(s);
    const cdouble ph = P(row0, 0) / S(row0, 0);
    if ((P - ph * S).norm() > 1e-8 || std::abs(std::abs(ph) - 1.0) > 1e-8 || std::abs(ph.imag()) > 1e-8)
        throw std::invalid_argument("back_propagate: circuit is not Clifford on the register");
    return {ph.real() < 0, s};
}

// Gates preparing the +1 eigenstate of `op` (times `neg` sign) from |0>.
void prepare_eigenstate(DynamicCircuit &c, int q, char op, bool neg) {
    if (neg) c.x(q);
    if (op == 'X' || op == 'Y') c.h(q);
    if (op == 'Y') c.s(q);
}

void append_basis_change(DynamicCircuit &c, const PauliString &basis, const std::vector<int> &reg) {
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const int q = reg[i];
        if (basis[i] == 'X') c.h(q);
        if (basis[i] == 'Y') {
            c.s(q).s(q).s(q);
            c.h(q);
        }
    }
}

// Measures every register qubit into fresh cbits; returns them in register order.
std::vector<int> append_readout(DynamicCircuit &c, const std::vector<int> &reg) {
    std::vector<int> cb;
    for (int q : reg) {
        const int b = c.add_cbit();
        c.measure(q, b);
        cb.push_back(b);
    }
    return cb;
}

std::uint64_t support_mask(const PauliString &s) { return s.x_mask() | s.z_mask(); }

double parity_mean(const std::vector<double> &p, std::uint64_t mask) {
    double m = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x) m += parity(x & mask) ? -p[x] : p[x];
    return m;
}

std::vector<double> group_probabilities(const DynamicCircuit &prep, const PauliString &basis, const std::vector<int> &reg,
                                        long shots, const NoiseModel &noise, const CalibrationMatrix *cal, Rng &rng,
                                        std::vector<double> *raw = nullptr) {
    DynamicCircuit c = prep;
    append_basis_change(c, basis, reg);
    const auto cb = append_readout(c, reg);
    const Counts counts = run_counts(c, shots, noise, rng);
    auto freq = marginal_frequencies(counts, cb);
    if (raw) *raw = freq;
    if (cal) freq = mitigate_counts(*cal, freq);
    return freq;
}

struct Batch {
    std::vector<std::size_t> members;  // positions within the group
    PauliString letters;
    // rows: (support mask, sign bit) over the register
    std::vector<std::pair<std::uint64_t, int>> rows;
};

// GF(2) consistency of sum_{q in mask} b_q = s for every row.
bool consistent(std::vector<std::pair<std::uint64_t, int>> rows, std::uint64_t *solution) {
    std::vector<std::pair<std::uint64_t, int>> basis;
    for (auto [m, s] : rows) {
        for (const auto &[bm, bs] : basis) {
            const std::uint64_t pivot = std::uint64_t{1} << (63 - __builtin_clzll(bm));
            if (m & pivot) {
                m ^= bm;
                s ^= bs;
            }
        }
        if (m == 0) {
            if (s) return false;
            continue;
        }
        const std::uint64_t pivot = std::uint64_t{1} << (63 - __builtin_clzll(m));
        for (auto &[bm, bs] : basis)
            if (bm & pivot) {
                bm ^= m;
                bs ^= s;
            }
        basis.push_back({m, s});
    }
    if (solution) {
        std::uint64_t sol = 0;
        for (const auto &[bm, bs] : basis)
            if (bs) sol |= std::uint64_t{1} << (63 - __builtin_clzll(bm));
        *solution = sol;
    }
    return true;
}

}  // namespace

void CalibrationMatrix::validate() const {
    const auto dim = static_cast<Eigen::Index>(std::size_t{1} << n);
    if (m.rows() != dim || m.cols() != dim) throw std::invalid_argument("calibration: dimension mismatch");
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (std::abs(m.col(c).sum() - 1.0) > 1e-9) throw std::invalid_argument("calibration: column does not sum to 1");
        if (m.col(c).minCoeff() < 0.0 || m.col(c).maxCoeff() > 1.0) throw std::invalid_argument("calibration: entry outside [0,1]");
    }
}

std::string CalibrationMatrix::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << n << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
        os << "\n";
    }
    return os.str();
}

CalibrationMatrix CalibrationMatrix::from_text(const std::string &text) {
    std::istringstream is(text);
    CalibrationMatrix cm;
    if (!(is >> cm.n) || cm.n < 1 || cm.n > 10) throw std::invalid_argument("calibration: bad header");
    const auto dim = static_cast<Eigen::Index>(std::size_t{1} << cm.n);
    cm.m.resize(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r)
        for (Eigen::Index c = 0; c < dim; ++c)
            if (!(is >> cm.m(r, c))) throw std::invalid_argument("calibration: truncated data");
    cm.validate();
    return cm;
}

CalibrationMatrix build_calibration_matrix(int n, const NoiseModel &noise, long shots_per_state, Rng &rng,
                                           const std::vector<int> &qubits) {
    if (n < 1 || n > 10) throw std::invalid_argument("calibration: n must be in [1,10]");
    if (shots_per_state < 1) throw std::invalid_argument("calibration: shots must be positive");
    const auto q = default_reg(static_cast<std::size_t>(n), qubits);
    const int width = *std::max_element(q.begin(), q.end()) + 1;
    NoiseModel readout_only = noise;
    readout_only.two_qubit_depolarizing = 0.0;
    const std::size_t dim = std::size_t{1} << n;
    CalibrationMatrix cm{n, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))};
    for (std::uint64_t x = 0; x < dim; ++x) {
        DynamicCircuit c(width, 0);
        for (int i = 0; i < n; ++i)
            if ((x >> (n - 1 - i)) & 1) c.x(q[static_cast<std::size_t>(i)]);
        const auto cb = append_readout(c, q);
        const auto f = marginal_frequencies(run_counts(c, shots_per_state, readout_only, rng), cb);
        for (std::size_t y = 0; y < dim; ++y) cm.m(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = f[y];
    }
    return cm;
}

std::vector<double> mitigate_counts(const CalibrationMatrix &cm, const std::vector<double> &freq) {
    const auto dim = cm.m.rows();
    if (static_cast<Eigen::Index>(freq.size()) != dim) throw std::invalid_argument("mitigate_counts: dimension mismatch");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cm.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > 1e12)
        throw std::domain_error("mitigate_counts: calibration matrix is singular");
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(freq.data(), dim);

    // Accelerated projected gradient on 0.5 |M p - c|^2 over the simplex.
    const Eigen::MatrixXd A = cm.m.transpose() * cm.m;
    const Eigen::VectorXd b = cm.m.transpose() * c;
    const double step = 1.0 / (sv(0) * sv(0));
    Eigen::VectorXd p = project_simplex(svd.solve(c));
    Eigen::VectorXd y = p;
    double t = 1.0;
    for (int it = 0; it < 200000; ++it) {
        const Eigen::VectorXd next = project_simplex(y - step * (A * y - b));
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / tn) * (next - p);
        const double moved = (next - p).lpNorm<Eigen::Infinity>();
        p = next;
        t = tn;
        if (moved < 1e-15) break;
    }
    return {p.data(), p.data() + p.size()};
}

std::vector<double> marginal_frequencies(const Counts &c, const std::vector<int> &cbits) {
    const std::size_t k = cbits.size();
    if (k > 30) throw std::invalid_argument("marginal_frequencies: too many bits");
    std::vector<double> f(std::size_t{1} << k, 0.0);
    long total = 0;
    for (const auto &[s, v] : c) {
        std::uint64_t idx = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const auto pos = static_cast<std::size_t>(cbits[i]);
            if (pos >= s.size()) throw std::invalid_argument("marginal_frequencies: cbit out of range");
            idx = (idx << 1) | (s[pos] == '1' ? 1u : 0u);
        }
        f[idx] += static_cast<double>(v);
        total += v;
    }
    if (total <= 0) throw std::invalid_argument("marginal_frequencies: empty counts");
    for (auto &x : f) x /= static_cast<double>(total);
    return f;
}

std::pair<PauliString, PauliString> twirl_partner_cx(const PauliString &before) {
    if (before.size() != 2) throw std::invalid_argument("twirl_partner_cx: need a two-qubit Pauli");
    const auto img = conj_two(PhasedPauli{0, before}, 0, 1, true);
    return {before, img.p};
}

DynamicCircuit pauli_twirl(const DynamicCircuit &c, Rng &rng) {
    DynamicCircuit out(c.num_qubits(), c.num_cbits());
    std::uniform_int_distribution<int> pick(0, 15);
    static constexpr char kOps[] = {'I', 'X', 'Y', 'Z'};
    auto emit = [&](char op, int q) {
        if (op == 'X') out.x(q);
        if (op == 'Y') out.y(q);
        if (op == 'Z') out.z(q);
    };
    for (const auto &in : c.instructions()) {
        const bool twirlable = in.kind == Instruction::Kind::Gate &&
                               (in.gate.type == GateType::CX || in.gate.type == GateType::CZ);
        if (!twirlable) {
            out.instructions().push_back(in);
            continue;
        }
        const int k = pick(rng);
        PauliString pre(2);
        pre.set(0, kOps[k / 4]);
        pre.set(1, kOps[k % 4]);
        // G P = P' G with P' = G P G^dag; both gates are self-inverse.
        const auto post = conj_two(PhasedPauli{0, pre}, 0, 1, in.gate.type == GateType::CX).p;
        const int a = in.gate.qubits[0], b = in.gate.qubits[1];
        emit(pre[0], a);
        emit(pre[1], b);
        out.instructions().push_back(in);
        emit(post[0], a);
        emit(post[1], b);
    }
    return out;
}

DynamicCircuit snap_to_clifford(const DynamicCircuit &c) {
    DynamicCircuit out = c;
    for (auto &in : out.instructions()) {
        if (in.kind == Instruction::Kind::Measure || in.kind == Instruction::Kind::Reset) continue;
        if (gate_has_param(in.gate.type)) in.gate.param = kHalfPi * snap_quarter(in.gate.param);
    }
    return out;
}

SignedPauli back_propagate(const DynamicCircuit &clifford, const std::vector<int> &reg, const PauliString &p) {
    if (reg.size() != p.size()) throw std::invalid_argument("back_propagate: register size mismatch");
    if (is_dynamic(clifford)) return back_propagate_dense(clifford, reg, p);
    PauliString full(static_cast<std::size_t>(clifford.num_qubits()));
    for (std::size_t i = 0; i < reg.size(); ++i) full.set(static_cast<std::size_t>(reg[i]), p[i]);
    const SignedPauli img = back_propagate_unitary(clifford, full);
    PauliString out(reg.size());
    std::vector<bool> on_reg(full.size(), false);
    for (std::size_t i = 0; i < reg.size(); ++i) {
        out.set(i, img.pauli[static_cast<std::size_t>(reg[i])]);
        on_reg[static_cast<std::size_t>(reg[i])] = true;
    }
    for (std::size_t q = 0; q < full.size(); ++q) {
        // Off-register qubits start in |0>, so a Z there is a +1 factor.
        const char op = img.pauli[q];
        if (!on_reg[q] && op != 'I' && op != 'Z')
            throw std::invalid_argument("back_propagate: image acts on an ancilla");
    }
    return {img.negative, out};
}

double self_mitigate(double phys_meas, double mitig_meas, double kappa) {
    if (!(kappa > 0)) throw std::invalid_argument("self_mitigate: kappa must be positive");
    if (std::abs(mitig_meas) < 0.05) throw std::domain_error("self_mitigate: reference value too small");
    return phys_meas / std::pow(mitig_meas, kappa);
}

double propagate_self_mitigation_error(double phys_mean, double phys_var, double mitig_mean, double mitig_var,
                                       double kappa) {
    if (!(kappa > 0)) throw std::invalid_argument("self_mitigate: kappa must be positive");
    if (std::abs(mitig_mean) < 0.05) throw std::domain_error("self_mitigate: reference value too small");
    const double a = std::pow(1.0 / mitig_mean, 2 * kappa) * phys_var;
    const double d = kappa * phys_mean / std::pow(mitig_mean, kappa + 1);
    return a + d * d * mitig_var;
}

void MitigationConfig::validate() const {
    if (!(kappa > 0)) throw std::invalid_argument("mitigation: kappa must be positive");
    if (readout && calibration_shots < 1) throw std::invalid_argument("mitigation: calibration shots must be positive");
}

namespace {

// Per-group quadratic form with optional per-member coefficient scale.
double group_variance(const Hamiltonian &h, const MeasurementGroup &g, const std::vector<double> &p, long shots,
                      const std::vector<double> *scale) {
    const std::size_t m = g.members.size();
    std::vector<double> w(m), mean(m);
    std::vector<std::uint64_t> mask(m);
    for (std::size_t a = 0; a < m; ++a) {
        const auto &t = h.terms()[g.members[a].term];
        if (!qubitwise_compatible(t.string, g.basis)) throw std::invalid_argument("variance: member not compatible with basis");
        mask[a] = support_mask(t.string);
        w[a] = t.coeff * g.members[a].ratio * (scale ? (*scale)[a] : 1.0);
        mean[a] = parity_mean(p, mask[a]);
    }
    double v = 0.0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) {
            const double cov = parity_mean(p, mask[a] ^ mask[b]) - mean[a] * mean[b];
            v += w[a] * w[b] * cov;
        }
    return v / static_cast<double>(shots);
}

// Readout-mitigated estimates are linear in the raw frequencies through
// M^-1, so the spread comes from the raw multinomial, not the clamped p.
double readout_group_variance(const Hamiltonian &h, const MeasurementGroup &g, const std::vector<double> &raw,
                              const CalibrationMatrix &cal, long shots, const std::vector<double> *scale) {
    const auto dim = static_cast<Eigen::Index>(raw.size());
    Eigen::VectorXd s = Eigen::VectorXd::Zero(dim);
    for (std::size_t a = 0; a < g.members.size(); ++a) {
        const auto &t = h.terms()[g.members[a].term];
        const double w = t.coeff * g.members[a].ratio * (scale ? (*scale)[a] : 1.0);
        const std::uint64_t mask = support_mask(t.string);
        for (Eigen::Index x = 0; x < dim; ++x) s(x) += std::popcount(static_cast<std::uint64_t>(x) & mask) & 1 ? -w : w;
    }
    const Eigen::VectorXd wx = cal.m.transpose().partialPivLu().solve(s);
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index x = 0; x < dim; ++x) {
        m1 += raw[x] * wx(x);
        m2 += raw[x] * wx(x) * wx(x);
    }
    return std::max(0.0, m2 - m1 * m1) / static_cast<double>(shots);
}

}  // namespace

double variance_with_covariance(const Hamiltonian &h, const std::vector<MeasurementGroup> &groups,
                                const std::vector<std::vector<double>> &probs, const std::vector<long> &shots,
                                bool *clamped) {
    if (probs.size() != groups.size() || shots.size() != groups.size())
        throw std::invalid_argument("variance: size mismatch");
    double v = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (probs[k].empty() || shots[k] < 1) throw std::invalid_argument("variance: empty group counts");
        v += group_variance(h, groups[k], probs[k], shots[k], nullptr);
    }
    if (clamped) *clamped = v < 0;
    return std::max(v, 0.0);
}

EstimateResult estimate_energy(const Hamiltonian &h, const DynamicCircuit &circuit, long shots, const NoiseModel &noise,
                               const MitigationConfig &mit, Rng &rng, const EstimateOptions &opt) {
    if (h.terms().empty()) throw std::invalid_argument("estimate_energy: empty Hamiltonian");
    mit.validate();
    noise.validate();
    const auto reg = default_reg(h.num_qubits(), opt.reg);
    auto groups = group_commuting(h);
    const auto K = static_cast<long>(groups.size());
    if (shots < K) throw std::invalid_argument("estimate_energy: fewer shots than groups");

    std::vector<long> n(groups.size(), shots / K);
    for (long k = 0; k < shots % K; ++k) ++n[static_cast<std::size_t>(k)];
    assign_ratios(groups, n);

    const std::uint64_t master = rng();
    Rng twirl_rng(mit.twirl_seed);

    CalibrationMatrix own_cal;
    const CalibrationMatrix *cal = nullptr;
    if (mit.readout) {
        cal = opt.calibration;
        if (!cal) {
            Rng cr(derive_seed(master, 1u << 20));
            own_cal = build_calibration_matrix(static_cast<int>(reg.size()), noise, mit.calibration_shots, cr, reg);
            cal = &own_cal;
        }
    }

    DynamicCircuit reference;
    if (mit.self_mitigation) reference = opt.reference ? *opt.reference : snap_to_clifford(circuit);

    EstimateResult res;
    res.term_means.assign(h.terms().size(), 0.0);
    std::vector<std::vector<double>> probs(groups.size()), raw(groups.size());
    std::vector<std::vector<double>> scales(groups.size());
    std::vector<double> mitig_var_part(groups.size(), 0.0);

    for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto &g = groups[k];
        Rng gr(derive_seed(master, k));
        const DynamicCircuit run = mit.twirl ? pauli_twirl(circuit, twirl_rng) : circuit;
        probs[k] = group_probabilities(run, g.basis, reg, n[k], noise, cal, gr, &raw[k]);

        GroupEstimate ge{g.basis, n[k], {}, 0.0};
        for (const auto &m : g.members) ge.member_means.push_back(parity_mean(probs[k], support_mask(h.terms()[m.term].string)));
        scales[k].assign(g.members.size(), 1.0);

        if (mit.self_mitigation) {
            // Batch members whose reference images admit one product input.
            std::vector<Batch> batches;
            for (std::size_t a = 0; a < g.members.size(); ++a) {
                const auto img = back_propagate(reference, reg, h.terms()[g.members[a].term].string);
                const std::pair<std::uint64_t, int> row{support_mask(img.pauli), img.negative ? 1 : 0};
                bool placed = false;
                for (auto &b : batches) {
                    if (!qubitwise_compatible(b.letters, img.pauli)) continue;
                    auto rows = b.rows;
                    rows.push_back(row);
                    if (!consistent(rows, nullptr)) continue;
                    b.rows = rows;
                    b.members.push_back(a);
                    for (std::size_t q = 0; q < reg.size(); ++q)
                        if (img.pauli[q] != 'I') b.letters.set(q, img.pauli[q]);
                    placed = true;
                    break;
                }
                if (!placed) batches.push_back({{a}, img.pauli, {row}});
            }
            for (const auto &b : batches) {
                std::uint64_t sol = 0;
                consistent(b.rows, &sol);
                DynamicCircuit ref(reference.num_qubits(), reference.num_cbits());
                for (std::size_t i = 0; i < reg.size(); ++i) {
                    const char op = b.letters[i];
                    if (op == 'I') continue;
                    const bool neg = (sol >> (reg.size() - 1 - i)) & 1;
                    prepare_eigenstate(ref, reg[i], op, neg);
                }
                ref.append(mit.twirl ? pauli_twirl(reference, twirl_rng) : reference);
                const auto pm = group_probabilities(ref, g.basis, reg, n[k], noise, cal, gr);
                for (std::size_t a : b.members) {
                    const double phys = ge.member_means[a];
                    const double mm = parity_mean(pm, support_mask(h.terms()[g.members[a].term].string));
                    if (std::abs(mm) < 0.05) {
                        res.mitigation_refused = true;
                        continue;
                    }
                    const double corrected = self_mitigate(phys, mm, mit.kappa);
                    scales[k][a] = std::pow(1.0 / mm, mit.kappa);
                    ge.member_means[a] = corrected;
                    // reference shot noise, propagated
                    const double w = h.terms()[g.members[a].term].coeff * g.members[a].ratio;
                    const double d = mit.kappa * phys / std::pow(mm, mit.kappa + 1);
                    mitig_var_part[k] += w * w * d * d * std::max(0.0, 1.0 - mm * mm) / static_cast<double>(n[k]);
                }
            }
        }
        for (std::size_t a = 0; a < g.members.size(); ++a)
            res.term_means[g.members[a].term] += g.members[a].ratio * ge.member_means[a];
        res.groups.push_back(std::move(ge));
    }

    double v = 0.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto *sc = mit.self_mitigation ? &scales[k] : nullptr;
        const double gv = (cal ? readout_group_variance(h, groups[k], raw[k], *cal, n[k], sc)
                               : group_variance(h, groups[k], probs[k], n[k], sc)) +
                          mitig_var_part[k];
        res.groups[k].variance = gv;
        v += gv;
    }
    res.clamped = v < 0;
    res.variance = std::max(v, 0.0);

    for (std::size_t j = 0; j < h.terms().size(); ++j) {
        const auto &t = h.terms()[j];
        if (t.string.is_identity()) res.term_means[j] = 1.0;
        res.mean += t.coeff * res.term_means[j];
    }
    return res;
}

double exact_energy(const Hamiltonian &h, const DynamicCircuit &circuit, const std::vector<int> &reg_in) {
    const auto reg = default_reg(h.num_qubits(), reg_in);
    const auto nq = static_cast<std::size_t>(circuit.num_qubits());
    std::vector<PauliTerm> wide;
    for (const auto &t : h.terms()) {
        PauliString s(nq);
        for (std::size_t i = 0; i < reg.size(); ++i) s.set(static_cast<std::size_t>(reg[i]), t.string[i]);
        wide.push_back({t.coeff, s});
    }
    const Hamiltonian hw(nq, wide);
    double e = 0.0;
    for (const auto &b : enumerate_branches(circuit)) e += b.probability * b.state.expectation(hw);
    return e;
}

}  // namespace mbvqe
