#include "mbvqe/statevector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mbvqe {

namespace {

constexpr double kZeroProb = 1e-14;

using Mat2 = std::array<cdouble, 4>;  // row-major

Mat2 single_matrix(GateType t, double th) {
    const cdouble i(0, 1);
    const double r = 1.0 / std::sqrt(2.0);
    const double c = std::cos(th / 2), s = std::sin(th / 2);
    switch (t) {
        case GateType::H: return {r, r, r, -r};
        case GateType::S: return {1, 0, 0, i};
        case GateType::X: return {0, 1, 1, 0};
        case GateType::Y: return {0, -i, i, 0};
        case GateType::Z: return {1, 0, 0, -1};
        case GateType::RX: return {c, -i * s, -i * s, c};
        case GateType::RY: return {c, -s, s, c};
        case GateType::RZ: return {std::exp(-i * (th / 2)), 0, 0, std::exp(i * (th / 2))};
        default: throw std::logic_error("not a single-qubit gate");
    }
}

std::uint64_t bit_of(int n, int q) { return std::uint64_t{1} << (n - 1 - q); }

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    // splitmix64 over the pair
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

const char *gate_name(GateType g) {
    switch (g) {
        case GateType::H: return "H";
        case GateType::S: return "S";
        case GateType::X: return "X";
        case GateType::Y: return "Y";
        case GateType::Z: return "Z";
        case GateType::RX: return "RX";
        case GateType::RY: return "RY";
        case GateType::RZ: return "RZ";
        case GateType::CZ: return "CZ";
        case GateType::CX: return "CX";
    }
    return "?";
}

GateType parse_gate(const std::string &name) {
    static const std::map<std::string, GateType> table = {
        {"H", GateType::H},   {"S", GateType::S},   {"X", GateType::X},   {"Y", GateType::Y},   {"Z", GateType::Z},
        {"RX", GateType::RX}, {"RY", GateType::RY}, {"RZ", GateType::RZ}, {"CZ", GateType::CZ}, {"CX", GateType::CX}};
    auto it = table.find(name);
    if (it == table.end()) throw std::invalid_argument("unknown gate '" + name + "'");
    return it->second;
}

int gate_arity(GateType g) { return (g == GateType::CZ || g == GateType::CX) ? 2 : 1; }

bool gate_has_param(GateType g) { return g == GateType::RX || g == GateType::RY || g == GateType::RZ; }

QuantumState::QuantumState(int n) : n_(n), amps_(std::size_t{1} << n, 0.0) { amps_[0] = 1.0; }

QuantumState::QuantumState(int n, std::vector<cdouble> amps) : n_(n), amps_(std::move(amps)) {
    if (amps_.size() != (std::size_t{1} << n)) throw std::invalid_argument("QuantumState: amplitude count mismatch");
}

QuantumState QuantumState::basis(int n, std::uint64_t index) {
    QuantumState s(n);
    s.amps_[0] = 0.0;
    s.amps_.at(index) = 1.0;
    return s;
}

QuantumState QuantumState::random(int n, Rng &rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cdouble> a(std::size_t{1} << n);
    for (auto &x : a) x = cdouble(g(rng), g(rng));
    QuantumState s(n, std::move(a));
    s.normalize();
    return s;
}

QuantumState QuantumState::plus(int n) {
    const std::size_t dim = std::size_t{1} << n;
    return QuantumState(n, std::vector<cdouble>(dim, 1.0 / std::sqrt(static_cast<double>(dim))));
}

void QuantumState::apply(const Gate &g) {
    if (static_cast<int>(g.qubits.size()) != gate_arity(g.type)) throw std::invalid_argument("gate arity mismatch");
    for (int q : g.qubits) {
        if (q < 0 || q >= n_) throw std::out_of_range("gate qubit out of range");
    }
    const std::size_t dim = amps_.size();
    if (g.type == GateType::CZ || g.type == GateType::CX) {
        if (g.qubits[0] == g.qubits[1]) throw std::invalid_argument("two-qubit gate on a single qubit");
        const auto a = bit_of(n_, g.qubits[0]), b = bit_of(n_, g.qubits[1]);
        if (g.type == GateType::CZ) {
            for (std::size_t i = 0; i < dim; ++i) {
                if ((i & a) && (i & b)) amps_[i] = -amps_[i];
            }
        } else {
            for (std::size_t i = 0; i < dim; ++i) {
                if ((i & a) && !(i & b)) std::swap(amps_[i], amps_[i | b]);
            }
        }
        return;
    }
    const auto m = single_matrix(g.type, g.param);
    const auto b = bit_of(n_, g.qubits[0]);
    for (std::size_t i = 0; i < dim; ++i) {
        if (i & b) continue;
        const cdouble a0 = amps_[i], a1 = amps_[i | b];
        amps_[i] = m[0] * a0 + m[1] * a1;
        amps_[i | b] = m[2] * a0 + m[3] * a1;
    }
}

void QuantumState::apply_pauli(const PauliString &p) {
    if (static_cast<int>(p.size()) != n_) throw std::invalid_argument("apply_pauli: length mismatch");
    const auto xm = p.x_mask(), zm = p.z_mask();
    const cdouble yph = std::pow(cdouble(0, 1), static_cast<int>(p.y_count()));
    std::vector<cdouble> out(amps_.size());
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        double sign = (__builtin_popcountll(i & zm) % 2) ? -1.0 : 1.0;
        out[i ^ xm] = yph * sign * amps_[i];
    }
    amps_ = std::move(out);
}

double QuantumState::prob_one(int q) const {
    const auto b = bit_of(n_, q);
    double p = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (i & b) p += std::norm(amps_[i]);
    }
    return p;
}

double QuantumState::project(int q, int outcome) {
    if (q < 0 || q >= n_) throw std::out_of_range("measure qubit out of range");
    const auto b = bit_of(n_, q);
    double p = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        bool one = (i & b) != 0;
        if (one == (outcome == 1)) {
            p += std::norm(amps_[i]);
        } else {
            amps_[i] = 0.0;
        }
    }
    if (p > 0.0) {
        const double inv = 1.0 / std::sqrt(p);
        for (auto &a : amps_) a *= inv;
    }
    return p;
}

int QuantumState::measure(int q, Rng &rng) {
    const double p1 = prob_one(q);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int outcome = u(rng) < p1 ? 1 : 0;
    if (project(q, outcome) <= 0.0) throw std::runtime_error("measure: zero-probability branch drawn");
    return outcome;
}

void QuantumState::reset(int q, Rng &rng) {
    if (measure(q, rng) == 1) apply(GateType::X, {q});
}

double QuantumState::norm() const {
    double s = 0.0;
    for (const auto &a : amps_) s += std::norm(a);
    return std::sqrt(s);
}

void QuantumState::normalize() {
    const double nn = norm();
    if (nn == 0.0) throw std::runtime_error("normalize: zero vector");
    for (auto &a : amps_) a /= nn;
}

double QuantumState::expectation(const PauliString &p) const {
    if (static_cast<int>(p.size()) != n_) throw std::invalid_argument("expectation: length mismatch");
    const auto xm = p.x_mask(), zm = p.z_mask();
    const cdouble yph = std::pow(cdouble(0, 1), static_cast<int>(p.y_count()));
    cdouble acc = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        if (amps_[i] == 0.0) continue;
        double sign = (__builtin_popcountll(i & zm) % 2) ? -1.0 : 1.0;
        acc += std::conj(amps_[i ^ xm]) * yph * sign * amps_[i];
    }
    return acc.real();
}

double QuantumState::expectation(const Hamiltonian &h) const {
    double e = 0.0;
    for (const auto &t : h.terms()) e += t.coeff * expectation(t.string);
    return e;
}

QuantumState QuantumState::tensor(const QuantumState &other) const {
    std::vector<cdouble> a(amps_.size() * other.amps_.size());
    for (std::size_t i = 0; i < amps_.size(); ++i) {
        for (std::size_t j = 0; j < other.amps_.size(); ++j) a[i * other.amps_.size() + j] = amps_[i] * other.amps_[j];
    }
    return QuantumState(n_ + other.n_, std::move(a));
}

double fidelity(const QuantumState &a, const QuantumState &b) {
    if (a.num_qubits() != b.num_qubits()) throw std::invalid_argument("fidelity: qubit count mismatch");
    cdouble ov = 0.0;
    for (std::size_t i = 0; i < a.amplitudes().size(); ++i) ov += std::conj(a.amplitudes()[i]) * b.amplitudes()[i];
    return std::min(1.0, std::norm(ov));
}

double reduced_fidelity(const QuantumState &psi, const std::vector<int> &keep, const QuantumState &t) {
    const int n = psi.num_qubits();
    const int k = static_cast<int>(keep.size());
    if (t.num_qubits() != k) throw std::invalid_argument("reduced_fidelity: target size mismatch");
    std::vector<int> rest;
    for (int q = 0; q < n; ++q) {
        if (std::find(keep.begin(), keep.end(), q) == keep.end()) rest.push_back(q);
    }
    const std::size_t nr = std::size_t{1} << rest.size();
    std::vector<cdouble> overlap(nr, 0.0);
    for (std::size_t i = 0; i < psi.amplitudes().size(); ++i) {
        const cdouble a = psi.amplitudes()[i];
        if (a == 0.0) continue;
        std::size_t ti = 0, ri = 0;
        for (int j = 0; j < k; ++j) {
            if (i & bit_of(n, keep[j])) ti |= bit_of(k, j);
        }
        for (std::size_t j = 0; j < rest.size(); ++j) {
            if (i & bit_of(n, rest[j])) ri |= std::size_t{1} << (rest.size() - 1 - j);
        }
        overlap[ri] += std::conj(t.amplitudes()[ti]) * a;
    }
    double f = 0.0;
    for (const auto &o : overlap) f += std::norm(o);
    return std::min(1.0, f);
}

double expectation_exact(const QuantumState &s, const PauliString &p) { return s.expectation(p); }

DynamicCircuit &DynamicCircuit::gate(GateType t, std::vector<int> qubits, double param) {
    Instruction in;
    in.kind = Instruction::Kind::Gate;
    in.gate = Gate{t, std::move(qubits), param};
    ins_.push_back(std::move(in));
    return *this;
}

DynamicCircuit &DynamicCircuit::measure(int q, int c) {
    Instruction in;
    in.kind = Instruction::Kind::Measure;
    in.qubit = q;
    in.cbit = c;
    ins_.push_back(std::move(in));
    return *this;
}

DynamicCircuit &DynamicCircuit::reset(int q) {
    Instruction in;
    in.kind = Instruction::Kind::Reset;
    in.qubit = q;
    ins_.push_back(std::move(in));
    return *this;
}

DynamicCircuit &DynamicCircuit::conditional(std::vector<int> cbits, Gate g) {
    Instruction in;
    in.kind = Instruction::Kind::Conditional;
    in.gate = std::move(g);
    in.condition = std::move(cbits);
    ins_.push_back(std::move(in));
    return *this;
}

DynamicCircuit &DynamicCircuit::append(const DynamicCircuit &other) {
    n_qubits_ = std::max(n_qubits_, other.n_qubits_);
    n_cbits_ = std::max(n_cbits_, other.n_cbits_);
    ins_.insert(ins_.end(), other.ins_.begin(), other.ins_.end());
    return *this;
}

void DynamicCircuit::validate() const {
    std::set<int> written;
    auto check_q = [&](int q) {
        if (q < 0 || q >= n_qubits_) throw std::out_of_range("circuit: qubit index out of range");
    };
    for (const auto &in : ins_) {
        switch (in.kind) {
            case Instruction::Kind::Gate:
            case Instruction::Kind::Conditional:
                if (static_cast<int>(in.gate.qubits.size()) != gate_arity(in.gate.type))
                    throw std::invalid_argument("circuit: gate arity mismatch");
                for (int q : in.gate.qubits) check_q(q);
                if (in.kind == Instruction::Kind::Conditional) {
                    if (in.condition.empty()) throw std::invalid_argument("circuit: empty condition");
                    for (int c : in.condition) {
                        if (!written.count(c)) throw std::invalid_argument("circuit: conditional reads unwritten cbit");
                    }
                }
                break;
            case Instruction::Kind::Measure:
                check_q(in.qubit);
                if (in.cbit < 0 || in.cbit >= n_cbits_) throw std::out_of_range("circuit: cbit index out of range");
                written.insert(in.cbit);
                break;
            case Instruction::Kind::Reset: check_q(in.qubit); break;
        }
    }
}

std::size_t DynamicCircuit::count_two_qubit() const {
    std::size_t k = 0;
    for (const auto &in : ins_) {
        if ((in.kind == Instruction::Kind::Gate || in.kind == Instruction::Kind::Conditional) &&
            gate_arity(in.gate.type) == 2)
            ++k;
    }
    return k;
}

std::string DynamicCircuit::to_text() const {
    std::ostringstream os;
    os.precision(10);
    os << "qubits " << n_qubits_ << " cbits " << n_cbits_ << '\n';
    auto gate_str = [&](const Gate &g) {
        os << gate_name(g.type);
        if (gate_has_param(g.type)) os << '(' << g.param << ')';
        for (int q : g.qubits) os << ' ' << q;
    };
    for (const auto &in : ins_) {
        switch (in.kind) {
            case Instruction::Kind::Gate: gate_str(in.gate); break;
            case Instruction::Kind::Measure: os << "MEASURE " << in.qubit << " -> c" << in.cbit; break;
            case Instruction::Kind::Reset: os << "RESET " << in.qubit; break;
            case Instruction::Kind::Conditional:
                os << "IF c";
                for (std::size_t j = 0; j < in.condition.size(); ++j) os << (j ? "^c" : "") << in.condition[j];
                os << " THEN ";
                gate_str(in.gate);
                break;
        }
        os << '\n';
    }
    return os.str();
}

ReadoutFlip NoiseModel::flip_for(int q) const {
    auto it = readout.find(q);
    return it == readout.end() ? readout_all : it->second;
}

bool NoiseModel::noiseless() const {
    auto zero = [](const ReadoutFlip &f) { return f.p1_given0 == 0.0 && f.p0_given1 == 0.0; };
    if (two_qubit_depolarizing != 0.0 || !zero(readout_all)) return false;
    return std::all_of(readout.begin(), readout.end(), [&](const auto &kv) { return zero(kv.second); });
}

void NoiseModel::validate() const {
    auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!ok(two_qubit_depolarizing)) throw std::invalid_argument("noise: depolarizing probability outside [0,1]");
    if (!ok(readout_all.p1_given0) || !ok(readout_all.p0_given1)) throw std::invalid_argument("noise: readout probability outside [0,1]");
    for (const auto &[q, f] : readout) {
        if (!ok(f.p1_given0) || !ok(f.p0_given1)) throw std::invalid_argument("noise: readout probability outside [0,1]");
    }
}

std::string counts_to_json(const Counts &c) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto &[k, v] : c) j[k] = v;
    return j.dump();
}

Counts counts_from_json(const std::string &text) {
    Counts c;
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("counts: expected a JSON object");
    for (const auto &item : j.items()) c[item.key()] = item.value().get<long>();
    return c;
}

std::string cbits_to_string(std::uint64_t key, int n_cbits) {
    std::string s(n_cbits, '0');
    for (int c = 0; c < n_cbits; ++c) {
        if (key >> c & 1) s[c] = '1';
    }
    return s;
}

QuantumState initial_state(const DynamicCircuit &c, const QuantumState *init) {
    if (!init) return QuantumState(c.num_qubits());
    if (init->num_qubits() != c.num_qubits()) throw std::invalid_argument("initial state size mismatch");
    return *init;
}

namespace {

bool condition_holds(const Instruction &in, const std::vector<int> &cbits) {
    int parity = 0;
    for (int c : in.condition) parity ^= cbits.at(c);
    return parity == 1;
}

std::uint64_t pack(const std::vector<int> &cbits) {
    std::uint64_t k = 0;
    for (std::size_t c = 0; c < cbits.size(); ++c) {
        if (cbits[c]) k |= std::uint64_t{1} << c;
    }
    return k;
}

// Depth-first walk over measurement branches. `inserts` maps instruction
// index to a two-qubit Pauli (code 1..15: 4*a + b over IXYZ) applied after
// that gate when it executes.
struct Walker {
    explicit Walker(const DynamicCircuit &circuit) : c(circuit) {}

    const DynamicCircuit &c;
    const NoiseModel *readout = nullptr;
    const std::map<std::size_t, int> *inserts = nullptr;
    std::size_t terminal = SIZE_MAX;  // first instruction of a trailing measure-only block
    std::function<void(double, const QuantumState &, const std::vector<int> &)> leaf;
    std::map<std::uint64_t, double> *dist = nullptr;

    void insert_pauli(QuantumState &st, const Gate &g, int code) const {
        const int a = code >> 2, b = code & 3;
        auto apply1 = [&](int q, int k) {
            if (k == 1) st.apply(GateType::X, {q});
            if (k == 2) st.apply(GateType::Y, {q});
            if (k == 3) st.apply(GateType::Z, {q});
        };
        apply1(g.qubits[0], a);
        apply1(g.qubits[1], b);
    }

    void walk(std::size_t i, QuantumState st, std::vector<int> cb, double p) {
        for (; i < c.instructions().size(); ++i) {
            if (i == terminal && dist) {
                terminal_block(i, st, cb, p);
                return;
            }
            const auto &in = c.instructions()[i];
            switch (in.kind) {
                case Instruction::Kind::Gate:
                    st.apply(in.gate);
                    if (inserts) {
                        auto it = inserts->find(i);
                        if (it != inserts->end()) insert_pauli(st, in.gate, it->second);
                    }
                    break;
                case Instruction::Kind::Conditional:
                    if (condition_holds(in, cb)) {
                        st.apply(in.gate);
                        if (inserts) {
                            auto it = inserts->find(i);
                            if (it != inserts->end()) insert_pauli(st, in.gate, it->second);
                        }
                    }
                    break;
                case Instruction::Kind::Reset: {
                    const double p1 = st.prob_one(in.qubit);
                    if (p1 > kZeroProb && 1 - p1 > kZeroProb) {
                        QuantumState s1 = st;
                        s1.project(in.qubit, 1);
                        s1.apply(GateType::X, {in.qubit});
                        walk(i + 1, std::move(s1), cb, p * p1);
                        st.project(in.qubit, 0);
                        p *= 1 - p1;
                    } else if (p1 > 0.5) {
                        st.project(in.qubit, 1);
                        st.apply(GateType::X, {in.qubit});
                    } else {
                        st.project(in.qubit, 0);
                    }
                    break;
                }
                case Instruction::Kind::Measure: {
                    const double p1 = st.prob_one(in.qubit);
                    const ReadoutFlip f = readout ? readout->flip_for(in.qubit) : ReadoutFlip{};
                    for (int o = 0; o < 2; ++o) {
                        const double po = o ? p1 : 1 - p1;
                        if (po <= kZeroProb) continue;
                        QuantumState so = st;
                        so.project(in.qubit, o);
                        const double flip = o ? f.p0_given1 : f.p1_given0;
                        for (int r = 0; r < 2; ++r) {
                            const double pr = (r == o) ? 1 - flip : flip;
                            if (pr <= 0.0) continue;
                            auto cr = cb;
                            cr[in.cbit] = r;
                            walk(i + 1, so, std::move(cr), p * po * pr);
                        }
                    }
                    return;
                }
            }
        }
        if (leaf) leaf(p, st, cb);
        if (dist) (*dist)[pack(cb)] += p;
    }

    void terminal_block(std::size_t i, const QuantumState &st, std::vector<int> cb, double p) {
        const int n = st.num_qubits();
        std::vector<std::pair<int, int>> qc;  // qubit, cbit
        for (std::size_t k = i; k < c.instructions().size(); ++k) qc.push_back({c.instructions()[k].qubit, c.instructions()[k].cbit});
        for (auto [q, cbit] : qc) cb[cbit] = 0;
        const std::uint64_t base = pack(cb);
        // Distribution over the measured qubits, indexed by position in qc.
        const std::size_t m = qc.size();
        std::vector<double> probs(std::size_t{1} << m, 0.0);
        for (std::size_t a = 0; a < st.amplitudes().size(); ++a) {
            const double w = std::norm(st.amplitudes()[a]);
            if (w == 0.0) continue;
            std::size_t key = 0;
            for (std::size_t j = 0; j < m; ++j) {
                if (a & bit_of(n, qc[j].first)) key |= std::size_t{1} << j;
            }
            probs[key] += w;
        }
        if (readout) {
            for (std::size_t j = 0; j < m; ++j) {
                const ReadoutFlip f = readout->flip_for(qc[j].first);
                if (f.p0_given1 == 0.0 && f.p1_given0 == 0.0) continue;
                const std::size_t bj = std::size_t{1} << j;
                for (std::size_t key = 0; key < probs.size(); ++key) {
                    if (key & bj) continue;
                    const double p0 = probs[key], p1 = probs[key | bj];
                    probs[key] = p0 * (1 - f.p1_given0) + p1 * f.p0_given1;
                    probs[key | bj] = p0 * f.p1_given0 + p1 * (1 - f.p0_given1);
                }
            }
        }
        for (std::size_t key = 0; key < probs.size(); ++key) {
            if (probs[key] <= 0.0) continue;
            std::uint64_t out = base;
            for (std::size_t j = 0; j < m; ++j) {
                if (key >> j & 1) out |= std::uint64_t{1} << qc[j].second;
            }
            (*dist)[out] += p * probs[key];
        }
    }
};

std::size_t find_terminal(const DynamicCircuit &c) {
    const auto &ins = c.instructions();
    std::size_t k = ins.size();
    std::set<int> qubits;
    while (k > 0 && ins[k - 1].kind == Instruction::Kind::Measure && !qubits.count(ins[k - 1].qubit)) {
        qubits.insert(ins[k - 1].qubit);
        --k;
    }
    return k == ins.size() ? SIZE_MAX : k;
}

}  // namespace

RunResult run_exact(const DynamicCircuit &c, Rng &rng, const QuantumState *init) {
    c.validate();
    RunResult r{initial_state(c, init), std::vector<int>(c.num_cbits(), 0)};
    for (const auto &in : c.instructions()) {
        switch (in.kind) {
            case Instruction::Kind::Gate: r.state.apply(in.gate); break;
            case Instruction::Kind::Conditional:
                if (condition_holds(in, r.cbits)) r.state.apply(in.gate);
                break;
            case Instruction::Kind::Measure: r.cbits[in.cbit] = r.state.measure(in.qubit, rng); break;
            case Instruction::Kind::Reset: r.state.reset(in.qubit, rng); break;
        }
    }
    return r;
}

RunResult run_forced(const DynamicCircuit &c, const std::vector<int> &outcomes, const QuantumState *init) {
    c.validate();
    RunResult r{initial_state(c, init), std::vector<int>(c.num_cbits(), 0)};
    std::size_t k = 0;
    for (const auto &in : c.instructions()) {
        switch (in.kind) {
            case Instruction::Kind::Gate: r.state.apply(in.gate); break;
            case Instruction::Kind::Conditional:
                if (condition_holds(in, r.cbits)) r.state.apply(in.gate);
                break;
            case Instruction::Kind::Measure: {
                if (k >= outcomes.size()) throw std::invalid_argument("run_forced: not enough forced outcomes");
                const int o = outcomes[k++];
                if (r.state.project(in.qubit, o) <= kZeroProb)
                    throw std::runtime_error("run_forced: forced outcome has zero probability");
                r.cbits[in.cbit] = o;
                break;
            }
            case Instruction::Kind::Reset: {
                const int o = r.state.prob_one(in.qubit) > 0.5 ? 1 : 0;
                r.state.project(in.qubit, o);
                if (o) r.state.apply(GateType::X, {in.qubit});
                break;
            }
        }
    }
    return r;
}

std::vector<Branch> enumerate_branches(const DynamicCircuit &c, const QuantumState *init) {
    c.validate();
    std::vector<Branch> out;
    Walker w{c};
    w.leaf = [&](double p, const QuantumState &s, const std::vector<int> &cb) { out.push_back({p, s, cb}); };
    w.walk(0, initial_state(c, init), std::vector<int>(c.num_cbits(), 0), 1.0);
    return out;
}

std::map<std::uint64_t, double> cbit_distribution(const DynamicCircuit &c, const NoiseModel &noise,
                                                  const QuantumState *init) {
    c.validate();
    std::map<std::uint64_t, double> dist;
    Walker w{c};
    w.readout = &noise;
    w.dist = &dist;
    w.terminal = find_terminal(c);
    w.walk(0, initial_state(c, init), std::vector<int>(c.num_cbits(), 0), 1.0);
    return dist;
}

namespace {

void sample_into(const std::map<std::uint64_t, double> &dist, long shots, Rng &rng, std::map<std::uint64_t, long> &acc) {
    // Multinomial draw via sequential binomials.
    double remaining_p = 0.0;
    for (const auto &[k, p] : dist) remaining_p += p;
    long left = shots;
    for (auto it = dist.begin(); it != dist.end() && left > 0; ++it) {
        long take;
        if (std::next(it) == dist.end() || remaining_p <= it->second) {
            take = left;
        } else {
            std::binomial_distribution<long> b(left, std::clamp(it->second / remaining_p, 0.0, 1.0));
            take = b(rng);
        }
        if (take > 0) acc[it->first] += take;
        left -= take;
        remaining_p -= it->second;
    }
}

}  // namespace

Counts run_counts(const DynamicCircuit &c, long shots, const NoiseModel &noise, Rng &rng, const QuantumState *init) {
    c.validate();
    noise.validate();
    if (shots < 0) throw std::invalid_argument("run_counts: negative shots");
    std::map<std::uint64_t, long> acc;
    const double p = noise.two_qubit_depolarizing;
    if (p == 0.0) {
        sample_into(cbit_distribution(c, noise, init), shots, rng, acc);
    } else {
        std::vector<std::size_t> twoq;
        for (std::size_t i = 0; i < c.instructions().size(); ++i) {
            const auto &in = c.instructions()[i];
            if ((in.kind == Instruction::Kind::Gate || in.kind == Instruction::Kind::Conditional) && gate_arity(in.gate.type) == 2)
                twoq.push_back(i);
        }
        std::map<std::map<std::size_t, int>, long> realizations;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<int> pick(1, 15);
        for (long s = 0; s < shots; ++s) {
            std::map<std::size_t, int> r;
            for (std::size_t i : twoq) {
                if (u(rng) < p) r[i] = pick(rng);
            }
            ++realizations[r];
        }
        const std::size_t terminal = find_terminal(c);
        for (const auto &[ins, k] : realizations) {
            std::map<std::uint64_t, double> dist;
            Walker w{c};
            w.readout = &noise;
            w.inserts = &ins;
            w.dist = &dist;
            w.terminal = terminal;
            w.walk(0, initial_state(c, init), std::vector<int>(c.num_cbits(), 0), 1.0);
            sample_into(dist, k, rng, acc);
        }
    }
    Counts out;
    for (const auto &[k, v] : acc) out[cbits_to_string(k, c.num_cbits())] = v;
    return out;
}

}  // namespace mbvqe
