#include "mbvqe/pauli.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mbvqe {

namespace {

bool valid_op(char c) { return c == 'I' || c == 'X' || c == 'Y' || c == 'Z'; }

// Single-qubit product table: returns (phase, op) for a*b.
std::pair<cdouble, char> mul1(char a, char b) {
    const cdouble i(0, 1);
    if (a == 'I') return {1.0, b};
    if (b == 'I') return {1.0, a};
    if (a == b) return {1.0, 'I'};
    if (a == 'X' && b == 'Y') return {i, 'Z'};
    if (a == 'Y' && b == 'X') return {-i, 'Z'};
    if (a == 'Y' && b == 'Z') return {i, 'X'};
    if (a == 'Z' && b == 'Y') return {-i, 'X'};
    if (a == 'Z' && b == 'X') return {i, 'Y'};
    return {-i, 'Y'};  // X*Z
}

}  // namespace

PauliString::PauliString(std::size_t n) : ops_(n, 'I') {}

PauliString::PauliString(std::string_view ops) : ops_(ops) {
    for (char c : ops_) {
        if (!valid_op(c)) throw std::invalid_argument("invalid Pauli symbol in '" + ops_ + "'");
    }
}

PauliString PauliString::single(std::size_t n, std::size_t qubit, char op) {
    PauliString p(n);
    p.set(qubit, op);
    return p;
}

void PauliString::set(std::size_t q, char op) {
    if (!valid_op(op)) throw std::invalid_argument("invalid Pauli symbol");
    if (q >= ops_.size()) throw std::out_of_range("Pauli qubit index out of range");
    ops_[q] = op;
}

bool PauliString::is_identity() const {
    return std::all_of(ops_.begin(), ops_.end(), [](char c) { return c == 'I'; });
}

std::size_t PauliString::weight() const {
    return static_cast<std::size_t>(std::count_if(ops_.begin(), ops_.end(), [](char c) { return c != 'I'; }));
}

std::uint64_t PauliString::x_mask() const {
    std::uint64_t m = 0;
    const std::size_t n = ops_.size();
    for (std::size_t q = 0; q < n; ++q) {
        if (has_x(q)) m |= std::uint64_t{1} << (n - 1 - q);
    }
    return m;
}

std::uint64_t PauliString::z_mask() const {
    std::uint64_t m = 0;
    const std::size_t n = ops_.size();
    for (std::size_t q = 0; q < n; ++q) {
        if (has_z(q)) m |= std::uint64_t{1} << (n - 1 - q);
    }
    return m;
}

std::size_t PauliString::y_count() const {
    return static_cast<std::size_t>(std::count(ops_.begin(), ops_.end(), 'Y'));
}

std::ostream &operator<<(std::ostream &os, const PauliString &p) { return os << p.str(); }

std::pair<cdouble, PauliString> multiply(const PauliString &a, const PauliString &b) {
    if (a.size() != b.size()) throw std::invalid_argument("multiply: length mismatch");
    cdouble phase = 1.0;
    std::string out(a.size(), 'I');
    for (std::size_t q = 0; q < a.size(); ++q) {
        auto [ph, op] = mul1(a[q], b[q]);
        phase *= ph;
        out[q] = op;
    }
    return {phase, PauliString(out)};
}

bool commutes(const PauliString &a, const PauliString &b) {
    if (a.size() != b.size()) throw std::invalid_argument("commutes: length mismatch");
    int anti = 0;
    for (std::size_t q = 0; q < a.size(); ++q) {
        if (a[q] != 'I' && b[q] != 'I' && a[q] != b[q]) ++anti;
    }
    return anti % 2 == 0;
}

bool qubitwise_compatible(const PauliString &a, const PauliString &b) {
    if (a.size() != b.size()) throw std::invalid_argument("qubitwise_compatible: length mismatch");
    for (std::size_t q = 0; q < a.size(); ++q) {
        if (a[q] != 'I' && b[q] != 'I' && a[q] != b[q]) return false;
    }
    return true;
}

Hamiltonian::Hamiltonian(std::size_t n, std::vector<PauliTerm> terms) : n_(n) {
    std::map<std::string, std::size_t> index;
    for (auto &t : terms) {
        if (t.string.size() != n) throw std::invalid_argument("Hamiltonian: term length mismatch");
        if (!std::isfinite(t.coeff)) throw std::invalid_argument("Hamiltonian: non-finite coefficient");
        auto it = index.find(t.string.str());
        if (it == index.end()) {
            index.emplace(t.string.str(), terms_.size());
            terms_.push_back(t);
        } else {
            terms_[it->second].coeff += t.coeff;
        }
    }
}

double Hamiltonian::identity_coeff() const {
    for (const auto &t : terms_) {
        if (t.string.is_identity()) return t.coeff;
    }
    return 0.0;
}

Hamiltonian Hamiltonian::operator+(const Hamiltonian &o) const {
    if (o.n_ != n_) throw std::invalid_argument("Hamiltonian sum: qubit count mismatch");
    auto all = terms_;
    all.insert(all.end(), o.terms_.begin(), o.terms_.end());
    return Hamiltonian(n_, std::move(all));
}

Hamiltonian Hamiltonian::scaled(double s) const {
    auto t = terms_;
    for (auto &x : t) x.coeff *= s;
    return Hamiltonian(n_, std::move(t));
}

Hamiltonian parse_hamiltonian(std::istream &in) {
    std::vector<PauliTerm> terms;
    std::string line;
    std::size_t n = 0;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        double c;
        std::string s;
        if (!(ls >> c)) continue;
        if (!(ls >> s)) throw std::runtime_error("hamiltonian line " + std::to_string(lineno) + ": missing Pauli string");
        if (n == 0) n = s.size();
        if (s.size() != n) throw std::runtime_error("hamiltonian line " + std::to_string(lineno) + ": length mismatch");
        terms.push_back({c, PauliString(s)});
    }
    if (terms.empty()) throw std::runtime_error("hamiltonian: no terms");
    return Hamiltonian(n, std::move(terms));
}

std::string format_hamiltonian(const Hamiltonian &h) {
    std::ostringstream os;
    os.precision(12);
    for (const auto &t : h.terms()) os << t.coeff << ' ' << t.string << '\n';
    return os.str();
}

namespace {

// Every non-identity symbol of s appears in basis.
bool covered_by(const PauliString &s, const PauliString &basis) {
    for (std::size_t q = 0; q < s.size(); ++q) {
        if (s[q] != 'I' && s[q] != basis[q]) return false;
    }
    return true;
}

}  // namespace

std::vector<MeasurementGroup> group_commuting(const Hamiltonian &h) {
    if (h.terms().empty()) throw std::invalid_argument("group_commuting: empty Hamiltonian");
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < h.terms().size(); ++j) {
        if (!h.terms()[j].string.is_identity()) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(h.terms()[a].coeff) > std::abs(h.terms()[b].coeff);
    });

    std::vector<MeasurementGroup> groups;
    for (std::size_t j : order) {
        const auto &s = h.terms()[j].string;
        bool placed = false;
        for (auto &g : groups) {
            if (!qubitwise_compatible(g.basis, s)) continue;
            for (std::size_t q = 0; q < s.size(); ++q) {
                if (s[q] != 'I') g.basis.set(q, s[q]);
            }
            g.members.push_back({j, 1.0});
            placed = true;
            break;
        }
        if (!placed) groups.push_back({s, {{j, 1.0}}});
    }

    // Terms that also fit a later finished basis are measured there too.
    for (std::size_t k = 0; k < groups.size(); ++k) {
        for (std::size_t j : order) {
            auto &m = groups[k].members;
            bool present = std::any_of(m.begin(), m.end(), [&](const GroupMember &x) { return x.term == j; });
            if (!present && covered_by(h.terms()[j].string, groups[k].basis)) m.push_back({j, 1.0});
        }
        std::sort(groups[k].members.begin(), groups[k].members.end(),
                  [](const GroupMember &a, const GroupMember &b) { return a.term < b.term; });
    }
    assign_ratios(groups, std::vector<long>(groups.size(), 1));
    return groups;
}

void assign_ratios(std::vector<MeasurementGroup> &groups, const std::vector<long> &shots) {
    if (shots.size() != groups.size()) throw std::invalid_argument("assign_ratios: size mismatch");
    std::map<std::size_t, double> total;
    for (std::size_t k = 0; k < groups.size(); ++k) {
        for (const auto &m : groups[k].members) total[m.term] += static_cast<double>(shots[k]);
    }
    for (std::size_t k = 0; k < groups.size(); ++k) {
        for (auto &m : groups[k].members) m.ratio = static_cast<double>(shots[k]) / total[m.term];
    }
}

Eigen::MatrixXcd to_matrix(const PauliString &p) {
    const std::size_t n = p.size();
    if (n > kDenseQubitCap) throw std::invalid_argument("to_matrix: qubit cap exceeded");
    const std::size_t dim = std::size_t{1} << n;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
    const auto xm = p.x_mask(), zm = p.z_mask();
    const cdouble yph = std::pow(cdouble(0, 1), static_cast<int>(p.y_count()));
    for (std::size_t col = 0; col < dim; ++col) {
        std::size_t row = col ^ xm;
        double sign = (__builtin_popcountll(col & zm) % 2) ? -1.0 : 1.0;
        m(row, col) = yph * sign;
    }
    return m;
}

Eigen::MatrixXcd to_matrix(const Hamiltonian &h, std::size_t cap) {
    const std::size_t n = h.num_qubits();
    if (n > cap) throw std::invalid_argument("to_matrix: qubit cap exceeded");
    const std::size_t dim = std::size_t{1} << n;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
    for (const auto &t : h.terms()) {
        const auto xm = t.string.x_mask(), zm = t.string.z_mask();
        const cdouble yph = std::pow(cdouble(0, 1), static_cast<int>(t.string.y_count()));
        for (std::size_t col = 0; col < dim; ++col) {
            double sign = (__builtin_popcountll(col & zm) % 2) ? -1.0 : 1.0;
            m(col ^ xm, col) += t.coeff * yph * sign;
        }
    }
    return m;
}

}  // namespace mbvqe
