#include "mbvqe/tableau.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mbvqe/clifford.hpp"

namespace mbvqe {

std::string to_string(const SignedPauli &p) { return (p.negative ? "-" : "+") + p.pauli.str(); }

SignedPauli parse_signed_pauli(const std::string &text) {
    if (text.empty()) throw std::invalid_argument("empty Pauli");
    if (text[0] == '+' || text[0] == '-') return {text[0] == '-', PauliString(text.substr(1))};
    return {false, PauliString(text)};
}

StabilizerTableau::StabilizerTableau(int n)
    : n_(n), x_(2 * n, std::vector<std::uint8_t>(n, 0)), z_(2 * n, std::vector<std::uint8_t>(n, 0)), r_(2 * n, 0) {
    for (int i = 0; i < n; ++i) {
        x_[i][i] = 1;
        z_[n + i][i] = 1;
    }
}

namespace {

// Phase exponent contribution used by rowsum (Aaronson-Gottesman g).
int g(int x1, int z1, int x2, int z2) {
    if (!x1 && !z1) return 0;
    if (x1 && z1) return z2 - x2;
    if (x1 && !z1) return z2 * (2 * x2 - 1);
    return x2 * (1 - 2 * z2);
}

// Symplectic product of two rows given as (x, z) vectors.
int sym(const std::vector<std::uint8_t> &x1, const std::vector<std::uint8_t> &z1, const std::vector<std::uint8_t> &x2,
        const std::vector<std::uint8_t> &z2) {
    int s = 0;
    for (std::size_t j = 0; j < x1.size(); ++j) s ^= (x1[j] & z2[j]) ^ (z1[j] & x2[j]);
    return s;
}

// Solves A v = b over GF(2); A is m x k (rows of bits). Returns nullopt when
// inconsistent.
std::optional<std::vector<std::uint8_t>> solve_gf2(std::vector<std::vector<std::uint8_t>> a, std::vector<std::uint8_t> b) {
    const std::size_t m = a.size();
    const std::size_t k = m ? a[0].size() : 0;
    std::vector<int> pivcol;
    std::size_t row = 0;
    for (std::size_t col = 0; col < k && row < m; ++col) {
        std::size_t p = row;
        while (p < m && !a[p][col]) ++p;
        if (p == m) continue;
        std::swap(a[p], a[row]);
        std::swap(b[p], b[row]);
        for (std::size_t i = 0; i < m; ++i) {
            if (i != row && a[i][col]) {
                for (std::size_t j = 0; j < k; ++j) a[i][j] ^= a[row][j];
                b[i] ^= b[row];
            }
        }
        pivcol.push_back(static_cast<int>(col));
        ++row;
    }
    for (std::size_t i = row; i < m; ++i) {
        if (b[i]) return std::nullopt;
    }
    std::vector<std::uint8_t> v(k, 0);
    for (std::size_t i = 0; i < pivcol.size(); ++i) v[pivcol[i]] = b[i];
    return v;
}

}  // namespace

void StabilizerTableau::rowsum(int h, int i) {
    int sum = 2 * r_[h] + 2 * r_[i];
    for (int j = 0; j < n_; ++j) sum += g(x_[i][j], z_[i][j], x_[h][j], z_[h][j]);
    sum = ((sum % 4) + 4) % 4;
    if (sum != 0 && sum != 2) throw std::logic_error("rowsum: non-Hermitian product");
    r_[h] = sum == 2;
    for (int j = 0; j < n_; ++j) {
        x_[h][j] ^= x_[i][j];
        z_[h][j] ^= z_[i][j];
    }
}

void StabilizerTableau::row_mul_stab(int target, int source) {
    // S_t <- S_t S_s and D_s <- D_s D_t keeps the symplectic pairing.
    rowsum(n_ + target, n_ + source);
    for (int j = 0; j < n_; ++j) {
        x_[source][j] ^= x_[target][j];
        z_[source][j] ^= z_[target][j];
    }
}

void StabilizerTableau::swap_stab(int a, int b) {
    if (a == b) return;
    std::swap(x_[n_ + a], x_[n_ + b]);
    std::swap(z_[n_ + a], z_[n_ + b]);
    std::swap(r_[n_ + a], r_[n_ + b]);
    std::swap(x_[a], x_[b]);
    std::swap(z_[a], z_[b]);
    std::swap(r_[a], r_[b]);
}

StabilizerTableau StabilizerTableau::from_stabilizers(const std::vector<SignedPauli> &generators) {
    const int n = static_cast<int>(generators.size());
    StabilizerTableau t(n);
    for (int i = 0; i < n; ++i) {
        const auto &p = generators[i].pauli;
        if (static_cast<int>(p.size()) != n) throw std::invalid_argument("from_stabilizers: need n generators on n qubits");
        for (int j = 0; j < n; ++j) {
            t.x_[n + i][j] = p.has_x(j);
            t.z_[n + i][j] = p.has_z(j);
        }
        t.r_[n + i] = generators[i].negative;
    }
    for (int i = 0; i < n; ++i) {
        for (int k = i + 1; k < n; ++k) {
            if (sym(t.x_[n + i], t.z_[n + i], t.x_[n + k], t.z_[n + k]))
                throw std::invalid_argument("from_stabilizers: generators do not commute");
        }
    }
    // Destabilizer i: anticommutes with S_i only. Unknown v = (x|z); the
    // symplectic product with S_k is z_k.x + x_k.z.
    for (int i = 0; i < n; ++i) {
        std::vector<std::vector<std::uint8_t>> a(n, std::vector<std::uint8_t>(2 * n));
        std::vector<std::uint8_t> b(n, 0);
        for (int k = 0; k < n; ++k) {
            for (int j = 0; j < n; ++j) {
                a[k][j] = t.z_[n + k][j];
                a[k][n + j] = t.x_[n + k][j];
            }
            b[k] = k == i;
        }
        auto v = solve_gf2(a, b);
        if (!v) throw std::invalid_argument("from_stabilizers: generators are dependent");
        for (int j = 0; j < n; ++j) {
            t.x_[i][j] = (*v)[j];
            t.z_[i][j] = (*v)[n + j];
        }
        t.r_[i] = 0;
    }
    // Make destabilizers mutually commuting.
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) {
            if (sym(t.x_[i], t.z_[i], t.x_[j], t.z_[j])) {
                for (int c = 0; c < n; ++c) {
                    t.x_[i][c] ^= t.x_[n + j][c];
                    t.z_[i][c] ^= t.z_[n + j][c];
                }
            }
        }
    }
    if (!t.valid()) throw std::invalid_argument("from_stabilizers: invalid generator set");
    return t;
}

void StabilizerTableau::h(int q) {
    for (int i = 0; i < 2 * n_; ++i) {
        r_[i] ^= x_[i][q] & z_[i][q];
        std::swap(x_[i][q], z_[i][q]);
    }
}

void StabilizerTableau::s(int q) {
    for (int i = 0; i < 2 * n_; ++i) {
        r_[i] ^= x_[i][q] & z_[i][q];
        z_[i][q] ^= x_[i][q];
    }
}

void StabilizerTableau::x(int q) {
    for (int i = 0; i < 2 * n_; ++i) r_[i] ^= z_[i][q];
}

void StabilizerTableau::y(int q) {
    for (int i = 0; i < 2 * n_; ++i) r_[i] ^= x_[i][q] ^ z_[i][q];
}

void StabilizerTableau::z(int q) {
    for (int i = 0; i < 2 * n_; ++i) r_[i] ^= x_[i][q];
}

void StabilizerTableau::cx(int c, int t) {
    if (c == t) throw std::invalid_argument("cx: same qubit");
    for (int i = 0; i < 2 * n_; ++i) {
        r_[i] ^= x_[i][c] & z_[i][t] & (x_[i][t] ^ z_[i][c] ^ 1);
        x_[i][t] ^= x_[i][c];
        z_[i][c] ^= z_[i][t];
    }
}

void StabilizerTableau::cz(int a, int b) {
    h(b);
    cx(a, b);
    h(b);
}

void StabilizerTableau::apply(const Gate &gt) {
    const auto &q = gt.qubits;
    switch (gt.type) {
        case GateType::H: h(q.at(0)); break;
        case GateType::S: s(q.at(0)); break;
        case GateType::X: x(q.at(0)); break;
        case GateType::Y: y(q.at(0)); break;
        case GateType::Z: z(q.at(0)); break;
        case GateType::CX: cx(q.at(0), q.at(1)); break;
        case GateType::CZ: cz(q.at(0), q.at(1)); break;
        default: throw std::invalid_argument(std::string("tableau: non-Clifford gate ") + gate_name(gt.type));
    }
}

void StabilizerTableau::apply_word(int q, const std::string &word) {
    for (char c : word) {
        if (c == 'H') h(q);
        else if (c == 'S') s(q);
        else throw std::invalid_argument("apply_word: unknown symbol");
    }
}

MeasureResult StabilizerTableau::measure_z(int q, std::optional<int> forced, Rng *rng) {
    int p = -1;
    for (int i = n_; i < 2 * n_; ++i) {
        if (x_[i][q]) {
            p = i;
            break;
        }
    }
    if (p >= 0) {
        for (int i = 0; i < 2 * n_; ++i) {
            if (i != p && i != p - n_ && x_[i][q]) rowsum(i, p);
        }
        x_[p - n_] = x_[p];
        z_[p - n_] = z_[p];
        r_[p - n_] = r_[p];
        std::fill(x_[p].begin(), x_[p].end(), 0);
        std::fill(z_[p].begin(), z_[p].end(), 0);
        z_[p][q] = 1;
        int outcome;
        if (forced) {
            outcome = *forced;
        } else {
            std::uniform_int_distribution<int> coin(0, 1);
            outcome = coin(*rng);
        }
        r_[p] = static_cast<std::uint8_t>(outcome);
        return {outcome, false};
    }
    // Deterministic: accumulate into a scratch row.
    std::vector<std::uint8_t> sx(n_, 0), sz(n_, 0);
    int sr = 0;
    for (int i = 0; i < n_; ++i) {
        if (!x_[i][q]) continue;
        int sum = 2 * sr + 2 * r_[n_ + i];
        for (int j = 0; j < n_; ++j) sum += g(x_[n_ + i][j], z_[n_ + i][j], sx[j], sz[j]);
        sum = ((sum % 4) + 4) % 4;
        sr = sum == 2;
        for (int j = 0; j < n_; ++j) {
            sx[j] ^= x_[n_ + i][j];
            sz[j] ^= z_[n_ + i][j];
        }
    }
    if (forced && *forced != sr) throw std::runtime_error("measure: forced outcome impossible for deterministic measurement");
    return {sr, true};
}

namespace {

template <class F>
MeasureResult in_basis(StabilizerTableau &t, int q, char basis, F &&mz) {
    switch (basis) {
        case 'Z': return mz();
        case 'X': {
            t.h(q);
            auto r = mz();
            t.h(q);
            return r;
        }
        case 'Y': {
            // S^dag then H maps Y to Z.
            t.s(q), t.s(q), t.s(q);
            t.h(q);
            auto r = mz();
            t.h(q);
            t.s(q);
            return r;
        }
        default: throw std::invalid_argument("measure: basis must be X, Y or Z");
    }
}

}  // namespace

MeasureResult StabilizerTableau::measure(int q, char basis, Rng &rng) {
    if (q < 0 || q >= n_) throw std::out_of_range("measure: qubit out of range");
    return in_basis(*this, q, basis, [&] { return measure_z(q, std::nullopt, &rng); });
}

MeasureResult StabilizerTableau::measure(int q, char basis, int forced) {
    if (q < 0 || q >= n_) throw std::out_of_range("measure: qubit out of range");
    if (forced != 0 && forced != 1) throw std::invalid_argument("measure: forced outcome must be 0 or 1");
    return in_basis(*this, q, basis, [&] { return measure_z(q, forced, nullptr); });
}

int StabilizerTableau::expectation(const PauliString &p) const {
    if (static_cast<int>(p.size()) != n_) throw std::invalid_argument("expectation: length mismatch");
    std::vector<std::uint8_t> px(n_), pz(n_);
    for (int j = 0; j < n_; ++j) {
        px[j] = p.has_x(j);
        pz[j] = p.has_z(j);
    }
    // p is in the group iff it commutes with every stabilizer; its
    // decomposition is read off from the destabilizers.
    for (int i = n_; i < 2 * n_; ++i) {
        if (sym(x_[i], z_[i], px, pz)) return 0;
    }
    std::vector<std::uint8_t> sx(n_, 0), sz(n_, 0);
    int sr = 0;
    for (int i = 0; i < n_; ++i) {
        if (!sym(x_[i], z_[i], px, pz)) continue;
        int sum = 2 * sr + 2 * r_[n_ + i];
        for (int j = 0; j < n_; ++j) sum += g(x_[n_ + i][j], z_[n_ + i][j], sx[j], sz[j]);
        sum = ((sum % 4) + 4) % 4;
        sr = sum == 2;
        for (int j = 0; j < n_; ++j) {
            sx[j] ^= x_[n_ + i][j];
            sz[j] ^= z_[n_ + i][j];
        }
    }
    return sr ? -1 : 1;
}

namespace {

SignedPauli row_pauli(const std::vector<std::uint8_t> &x, const std::vector<std::uint8_t> &z, std::uint8_t r) {
    std::string s(x.size(), 'I');
    for (std::size_t j = 0; j < x.size(); ++j) s[j] = x[j] ? (z[j] ? 'Y' : 'X') : (z[j] ? 'Z' : 'I');
    return {r != 0, PauliString(s)};
}

}  // namespace

std::vector<SignedPauli> StabilizerTableau::stabilizers() const {
    std::vector<SignedPauli> out;
    for (int i = n_; i < 2 * n_; ++i) out.push_back(row_pauli(x_[i], z_[i], r_[i]));
    return out;
}

std::vector<SignedPauli> StabilizerTableau::destabilizers() const {
    std::vector<SignedPauli> out;
    for (int i = 0; i < n_; ++i) out.push_back(row_pauli(x_[i], z_[i], r_[i]));
    return out;
}

std::string StabilizerTableau::to_text() const {
    std::string s;
    for (const auto &p : stabilizers()) s += to_string(p) + "\n";
    return s;
}

void StabilizerTableau::canonicalize() {
    int rank = 0;
    for (int col = 0; col < n_ && rank < n_; ++col) {
        int p = -1;
        for (int i = rank; i < n_; ++i) {
            if (x_[n_ + i][col]) {
                p = i;
                break;
            }
        }
        if (p < 0) continue;
        swap_stab(p, rank);
        for (int i = 0; i < n_; ++i) {
            if (i != rank && x_[n_ + i][col]) row_mul_stab(i, rank);
        }
        ++rank;
    }
    int zrank = rank;
    for (int col = 0; col < n_ && zrank < n_; ++col) {
        int p = -1;
        for (int i = zrank; i < n_; ++i) {
            if (z_[n_ + i][col]) {
                p = i;
                break;
            }
        }
        if (p < 0) continue;
        swap_stab(p, zrank);
        for (int i = 0; i < n_; ++i) {
            // the pivot row is X-free, so the X block is untouched
            if (i != zrank && z_[n_ + i][col]) row_mul_stab(i, zrank);
        }
        ++zrank;
    }
}

bool StabilizerTableau::same_state(const StabilizerTableau &o) const {
    if (o.n_ != n_) return false;
    for (const auto &sp : o.stabilizers()) {
        const int e = expectation(sp.pauli);
        if (e != (sp.negative ? -1 : 1)) return false;
    }
    return true;
}

StabilizerTableau StabilizerTableau::without_qubit(int q) const {
    if (q < 0 || q >= n_) throw std::out_of_range("without_qubit: qubit out of range");
    StabilizerTableau t = *this;
    std::vector<int> with_support;
    // Eliminate column q: X part first, then Z part.
    int px = -1;
    for (int i = 0; i < n_; ++i) {
        if (t.x_[n_ + i][q]) {
            px = i;
            break;
        }
    }
    if (px >= 0) {
        for (int i = 0; i < n_; ++i) {
            if (i != px && t.x_[n_ + i][q]) t.row_mul_stab(i, px);
        }
    }
    int pz = -1;
    for (int i = 0; i < n_; ++i) {
        if (i != px && t.z_[n_ + i][q]) {
            pz = i;
            break;
        }
    }
    if (pz >= 0) {
        for (int i = 0; i < n_; ++i) {
            if (i != px && i != pz && t.z_[n_ + i][q]) t.row_mul_stab(i, pz);
        }
    }
    if (px >= 0 && pz >= 0) throw std::invalid_argument("without_qubit: qubit is entangled with the rest");
    const int drop = px >= 0 ? px : pz;
    std::vector<SignedPauli> gens;
    for (int i = 0; i < n_; ++i) {
        if (i == drop) continue;
        auto sp = row_pauli(t.x_[n_ + i], t.z_[n_ + i], t.r_[n_ + i]);
        std::string s = sp.pauli.str();
        s.erase(q, 1);
        gens.push_back({sp.negative, PauliString(s)});
    }
    if (gens.empty()) return StabilizerTableau(0);
    return from_stabilizers(gens);
}

bool StabilizerTableau::valid() const {
    for (int i = 0; i < 2 * n_; ++i) {
        for (int k = i + 1; k < 2 * n_; ++k) {
            const int expect = (k == i + n_) ? 1 : 0;
            if (sym(x_[i], z_[i], x_[k], z_[k]) != expect) return false;
        }
    }
    return true;
}

std::vector<std::pair<int, int>> GraphStateForm::edges() const {
    std::vector<std::pair<int, int>> e;
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            if (adjacency[a][b]) e.push_back({a, b});
        }
    }
    return e;
}

StabilizerTableau GraphStateForm::to_tableau() const {
    StabilizerTableau t(n);
    for (int q = 0; q < n; ++q) t.h(q);
    for (auto [a, b] : edges()) t.cz(a, b);
    for (int q = 0; q < n; ++q) t.apply_word(q, local_cliffords[q]);
    return t;
}

// Friend access for graph extraction, which works directly on the rows.
struct TableauAccess {
    static auto &x(StabilizerTableau &t) { return t.x_; }
    static auto &z(StabilizerTableau &t) { return t.z_; }
    static auto &r(StabilizerTableau &t) { return t.r_; }
    static void mul(StabilizerTableau &t, int target, int source) { t.row_mul_stab(target, source); }
    static void swap(StabilizerTableau &t, int a, int b) { t.swap_stab(a, b); }
};

GraphStateForm to_graph_state(const StabilizerTableau &tab, const std::vector<int> &priority) {
    const int n = tab.num_qubits();
    std::vector<int> order = priority;
    if (order.empty()) {
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
    }
    if (static_cast<int>(order.size()) != n) throw std::invalid_argument("to_graph_state: priority must list every qubit");
    StabilizerTableau t = tab;
    auto &X = TableauAccess::x(t);
    auto &Z = TableauAccess::z(t);
    auto &R = TableauAccess::r(t);
    std::vector<std::string> applied(n);  // time-ordered gates applied per qubit

    auto eliminate_x = [&](const std::vector<int> &cols) {
        int rank = 0;
        std::vector<int> pivots;
        for (int col : cols) {
            int p = -1;
            for (int i = rank; i < n; ++i) {
                if (X[n + i][col]) {
                    p = i;
                    break;
                }
            }
            if (p < 0) continue;
            TableauAccess::swap(t, p, rank);
            for (int i = 0; i < n; ++i) {
                if (i != rank && X[n + i][col]) TableauAccess::mul(t, i, rank);
            }
            pivots.push_back(col);
            ++rank;
        }
        return pivots;
    };

    auto pivots = eliminate_x(order);
    if (static_cast<int>(pivots.size()) < n) {
        for (int col : order) {
            if (std::find(pivots.begin(), pivots.end(), col) != pivots.end()) continue;
            t.h(col);
            applied[col] += 'H';
        }
        pivots = eliminate_x(order);
        if (static_cast<int>(pivots.size()) != n) throw std::logic_error("to_graph_state: X block not invertible");
    }
    // Put row c on pivot column c.
    for (int c = 0; c < n; ++c) {
        for (int i = c; i < n; ++i) {
            if (X[n + i][c]) {
                bool unit = true;
                for (int j = 0; j < n; ++j) {
                    if (j != c && X[n + i][j]) unit = false;
                }
                if (unit) {
                    TableauAccess::swap(t, i, c);
                    break;
                }
            }
        }
    }
    for (int c = 0; c < n; ++c) {
        if (Z[n + c][c]) {
            // Row c carries Y on c; S^dag turns it into X.
            t.s(c), t.s(c), t.s(c);
            applied[c] += "SSS";
        }
    }
    for (int c = 0; c < n; ++c) {
        if (R[n + c]) {
            t.z(c);
            applied[c] += "SS";
        }
    }
    GraphStateForm f;
    f.n = n;
    f.adjacency.assign(n, std::vector<std::uint8_t>(n, 0));
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            if (X[n + a][b] != (a == b)) throw std::logic_error("to_graph_state: X block is not the identity");
            f.adjacency[a][b] = Z[n + a][b];
        }
    }
    for (int a = 0; a < n; ++a) {
        if (f.adjacency[a][a]) throw std::logic_error("to_graph_state: nonzero diagonal");
        for (int b = 0; b < n; ++b) {
            if (f.adjacency[a][b] != f.adjacency[b][a]) throw std::logic_error("to_graph_state: asymmetric adjacency");
        }
    }
    f.local_cliffords.resize(n);
    for (int q = 0; q < n; ++q) f.local_cliffords[q] = canonical_word(inverse_word(applied[q]));
    return f;
}

}  // namespace mbvqe
