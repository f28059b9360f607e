#include "mbvqe/pattern.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mbvqe/clifford.hpp"
#include "mbvqe/tableau.hpp"

namespace mbvqe {

void toggle(DepSet &d, int q) {
    auto it = std::lower_bound(d.begin(), d.end(), q);
    if (it != d.end() && *it == q) d.erase(it);
    else d.insert(it, q);
}

void toggle_all(DepSet &d, const DepSet &other) {
    for (int q : other) toggle(d, q);
}

char basis_char(Measurement::Basis b) {
    switch (b) {
        case Measurement::Basis::X: return 'X';
        case Measurement::Basis::Y: return 'Y';
        case Measurement::Basis::Z: return 'Z';
        case Measurement::Basis::R: return 'R';
    }
    return '?';
}

namespace {

// X ignores sign flips; for Y a sign flip is an outcome flip.
Measurement normalized(Measurement m) {
    if (m.basis == Measurement::Basis::X) m.sign_deps.clear();
    if (m.basis == Measurement::Basis::Y) {
        toggle_all(m.flip_deps, m.sign_deps);
        m.sign_deps.clear();
    }
    return m;
}

std::pair<bool, bool> xz_of(char p) { return {p == 'X' || p == 'Y', p == 'Z' || p == 'Y'}; }

char pauli_of(bool x, bool z) { return x ? (z ? 'Y' : 'X') : (z ? 'Z' : 'I'); }

char conjugate_through(const std::string &word, char p) {
    if (word.empty() || p == 'I') return p;
    return SingleQubitClifford::from_word(word).conjugate(p).second;
}

std::string word_or_empty(const std::map<int, std::string> &m, int q) {
    auto it = m.find(q);
    return it == m.end() ? std::string() : it->second;
}

void emit_word(DynamicCircuit &c, int q, const std::string &word) {
    for (char ch : word) {
        if (ch == 'H') c.h(q);
        else if (ch == 'S') c.s(q);
        else throw std::invalid_argument("Clifford word: unknown symbol");
    }
}

std::pair<int, int> ordered(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace

bool Pattern::is_output(int q) const { return std::find(outputs.begin(), outputs.end(), q) != outputs.end(); }

bool Pattern::is_input(int q) const { return std::find(inputs.begin(), inputs.end(), q) != inputs.end(); }

std::vector<std::vector<int>> Pattern::neighbours() const {
    std::vector<std::vector<int>> nb(num_qubits);
    for (auto [a, b] : edges) {
        nb[a].push_back(b);
        nb[b].push_back(a);
    }
    for (auto &v : nb) std::sort(v.begin(), v.end());
    return nb;
}

void Pattern::validate() const {
    auto in_range = [&](int q) { return q >= 0 && q < num_qubits; };
    auto fail = [](const std::string &m) { throw std::invalid_argument("pattern: " + m); };
    std::set<int> seen;
    for (int q : inputs) {
        if (!in_range(q)) fail("input out of range");
        if (!seen.insert(q).second) fail("duplicate input");
    }
    seen.clear();
    for (int q : outputs) {
        if (!in_range(q)) fail("output out of range");
        if (!seen.insert(q).second) fail("duplicate output");
    }
    std::set<std::pair<int, int>> es;
    for (auto [a, b] : edges) {
        if (!in_range(a) || !in_range(b)) fail("edge out of range");
        if (a == b) fail("self loop");
        if (!es.insert(ordered(a, b)).second) fail("duplicate edge");
    }
    for (const auto &[q, w] : pre_cliffords) {
        if (!is_input(q)) fail("pre Clifford on a non-input qubit");
        SingleQubitClifford::from_word(w);
    }
    for (const auto &[q, w] : local_cliffords) {
        if (!in_range(q)) fail("Clifford out of range");
        SingleQubitClifford::from_word(w);
    }
    for (int q = 0; q < num_qubits; ++q) {
        const bool measured = measurements.count(q) > 0;
        if (is_output(q) && measured) fail("output " + std::to_string(q) + " is measured");
        if (!is_output(q) && !measured) fail("qubit " + std::to_string(q) + " is neither output nor measured");
    }
    if (order.size() != measurements.size()) fail("order must list every measured qubit once");
    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!measurements.count(order[i])) fail("order lists an unmeasured qubit");
        if (!pos.emplace(order[i], i).second) fail("order repeats a qubit");
    }
    for (const auto &[q, m] : measurements) {
        for (const DepSet *d : {&m.sign_deps, &m.flip_deps}) {
            for (int s : *d) {
                if (!pos.count(s)) fail("dependency on an unmeasured qubit");
                if (pos[s] >= pos[q]) fail("cyclic adaptivity: qubit " + std::to_string(q) + " depends on a later outcome");
            }
        }
        if (m.basis == Measurement::Basis::Z && !m.sign_deps.empty()) fail("Z measurement with sign dependencies");
        if (!std::isfinite(m.angle)) fail("non-finite angle");
    }
    for (const auto &[q, b] : byproducts) {
        if (!is_output(q)) fail("byproduct on a non-output qubit");
        for (const DepSet *d : {&b.x_deps, &b.z_deps}) {
            for (int s : *d) {
                if (!pos.count(s)) fail("byproduct depends on an unmeasured qubit");
            }
        }
    }
}

Pattern gadget_pattern(const PauliString &axis, double theta) {
    const int n = static_cast<int>(axis.size());
    if (n == 0) throw std::invalid_argument("gadget: empty axis");
    Pattern p;
    p.num_qubits = n + 1;
    for (int i = 0; i < n; ++i) {
        p.inputs.push_back(i);
        p.outputs.push_back(i);
        p.edges.push_back({i, n});
        Byproduct b;
        switch (axis[i]) {
            case 'Z': b.z_deps = {n}; break;
            case 'X':
                p.pre_cliffords[i] = "H";
                p.local_cliffords[i] = "H";
                b.x_deps = {n};
                break;
            case 'Y':
                p.pre_cliffords[i] = "SSSH";
                p.local_cliffords[i] = "HS";
                b.x_deps = {n};
                b.z_deps = {n};
                break;
            default: throw std::invalid_argument("gadget: axis must not contain identities");
        }
        p.byproducts[i] = b;
    }
    p.local_cliffords[n] = "H";
    Measurement m;
    m.basis = Measurement::Basis::R;
    m.angle = -theta;
    p.measurements[n] = m;
    p.order = {n};
    return p;
}

DynamicCircuit gate_gadget_circuit(const PauliString &axis, double theta) {
    const int n = static_cast<int>(axis.size());
    if (n == 0) throw std::invalid_argument("gadget: empty axis");
    DynamicCircuit c(n, 0);
    for (int i = 0; i < n; ++i) {
        if (axis[i] == 'X') c.h(i);
        else if (axis[i] == 'Y') c.s(i).s(i).s(i).h(i);
        else if (axis[i] != 'Z') throw std::invalid_argument("gadget: axis must not contain identities");
    }
    for (int i = 0; i + 1 < n; ++i) c.cx(i, i + 1);
    c.rz(n - 1, theta);
    for (int i = n - 2; i >= 0; --i) c.cx(i, i + 1);
    for (int i = 0; i < n; ++i) {
        if (axis[i] == 'X') c.h(i);
        else if (axis[i] == 'Y') c.h(i).s(i);
    }
    return c;
}

Pattern identity_pattern(int n) {
    Pattern p;
    p.num_qubits = n;
    for (int i = 0; i < n; ++i) {
        p.inputs.push_back(i);
        p.outputs.push_back(i);
    }
    return p;
}

Pattern cz_pattern() {
    Pattern p = identity_pattern(2);
    p.edges = {{0, 1}};
    return p;
}

Pattern j_pattern(double alpha) {
    Pattern p;
    p.num_qubits = 2;
    p.inputs = {0};
    p.outputs = {1};
    p.edges = {{0, 1}};
    Measurement m;
    m.basis = Measurement::Basis::R;
    m.angle = -alpha;
    // Quarter turns become Pauli measurements so reduce() can remove them.
    const double quarters = m.angle / (M_PI / 2);
    const double k = std::round(quarters);
    if (std::abs(quarters - k) < 1e-12) {
        const int r = ((static_cast<int>(k) % 4) + 4) % 4;
        m.basis = r % 2 == 0 ? Measurement::Basis::X : Measurement::Basis::Y;
        m.flip = r >= 2;
        m.angle = 0.0;
    }
    p.measurements[0] = m;
    p.order = {0};
    p.byproducts[1].x_deps = {0};
    return p;
}

namespace {

DepSet mapped(const DepSet &d, const std::vector<int> &map) {
    DepSet r;
    for (int q : d) toggle(r, map[q]);
    return r;
}

Measurement mapped(const Measurement &m, const std::vector<int> &map) {
    Measurement r = m;
    r.sign_deps = mapped(m.sign_deps, map);
    r.flip_deps = mapped(m.flip_deps, map);
    return r;
}

Byproduct mapped(const Byproduct &b, const std::vector<int> &map) {
    Byproduct r = b;
    r.x_deps = mapped(b.x_deps, map);
    r.z_deps = mapped(b.z_deps, map);
    return r;
}

// Pauli correction (x, z) conditioned on `deps` (plus a constant) applied
// just before qubit q is measured.
void absorb_into_measurement(Measurement &m, bool x, bool z, const DepSet &deps, bool c) {
    using B = Measurement::Basis;
    if (m.basis == B::Z) {
        if (x) {
            toggle_all(m.flip_deps, deps);
            m.flip ^= c;
        }
        return;
    }
    if (m.basis == B::R) {
        if (x) {
            toggle_all(m.sign_deps, deps);
            if (c) m.angle = -m.angle;
        }
        if (z) {
            toggle_all(m.flip_deps, deps);
            if (c) m.angle += M_PI;
        }
        return;
    }
    // X ignores an X correction, Y sees either X or Z as a flip.
    const bool flips = m.basis == B::X ? z : (x != z);
    if (flips) {
        toggle_all(m.flip_deps, deps);
        m.flip ^= c;
    }
}

void absorb_into_byproduct(Byproduct &b, bool x, bool z, const DepSet &deps, bool c) {
    if (x) {
        toggle_all(b.x_deps, deps);
        b.x_const ^= c;
    }
    if (z) {
        toggle_all(b.z_deps, deps);
        b.z_const ^= c;
    }
}

}  // namespace

Pattern tensor(const Pattern &a, const Pattern &b) {
    Pattern r = a;
    const int off = a.num_qubits;
    std::vector<int> map(b.num_qubits);
    std::iota(map.begin(), map.end(), off);
    r.num_qubits = a.num_qubits + b.num_qubits;
    for (int q : b.inputs) r.inputs.push_back(map[q]);
    for (int q : b.outputs) r.outputs.push_back(map[q]);
    for (auto [x, y] : b.edges) r.edges.push_back({map[x], map[y]});
    for (const auto &[q, w] : b.pre_cliffords) r.pre_cliffords[map[q]] = w;
    for (const auto &[q, w] : b.local_cliffords) r.local_cliffords[map[q]] = w;
    for (const auto &[q, m] : b.measurements) r.measurements[map[q]] = mapped(m, map);
    for (const auto &[q, bp] : b.byproducts) r.byproducts[map[q]] = mapped(bp, map);
    for (int q : b.order) r.order.push_back(map[q]);
    return r;
}

namespace {

std::string s_power(int k) { return std::string(static_cast<std::size_t>(k), 'S'); }

// Time-ordered S^x H S^y H S^z (y = -1 drops the second H) equal to c.
std::array<int, 3> bridge_exponents(const SingleQubitClifford &c) {
    for (int y = -1; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int z = 0; z < 4; ++z) {
                const std::string w = y < 0 ? s_power(x) + "H" + s_power(z) : s_power(x) + "H" + s_power(y) + "H" + s_power(z);
                if (SingleQubitClifford::from_word(w) == c) return {x, y, z};
            }
    throw std::logic_error("bridge_exponents: unreachable");
}

Pattern concatenate_diagonal(const Pattern &a, const Pattern &b);

}  // namespace

Pattern concatenate(const Pattern &a, const Pattern &b) {
    a.validate();
    b.validate();
    if (a.outputs.size() != b.inputs.size()) throw std::invalid_argument("concatenate: arity mismatch");
    // A non-diagonal Clifford between the two cannot move past b's CZs; route
    // it through J(0)/J(pi/2) wires instead.
    const auto bnb = b.neighbours();
    auto blocked = [&](std::size_t k) {
        const std::string join = word_or_empty(a.local_cliffords, a.outputs[k]) + word_or_empty(b.pre_cliffords, b.inputs[k]);
        return !bnb[b.inputs[k]].empty() && !SingleQubitClifford::from_word(join).is_diagonal();
    };
    bool need_bridge = false;
    for (std::size_t k = 0; k < b.inputs.size(); ++k) need_bridge = need_bridge || blocked(k);
    if (!need_bridge) return concatenate_diagonal(a, b);

    Pattern a2 = a, b2 = b;
    Pattern bridge;
    for (std::size_t k = 0; k < b.inputs.size(); ++k) {
        const int o = a.outputs[k];
        const std::string la = word_or_empty(a.local_cliffords, o);
        const std::string join = la + word_or_empty(b.pre_cliffords, b.inputs[k]);
        const auto c = SingleQubitClifford::from_word(join);
        Pattern wire = identity_pattern(1);
        if (blocked(k)) {
            // a's byproducts were applied after la; commute them before it.
            auto bp = a2.byproducts.find(o);
            if (bp != a2.byproducts.end()) {
                const std::string inv = inverse_word(la);
                Byproduct moved;
                for (char kind : {'X', 'Z'}) {
                    const DepSet &deps = kind == 'X' ? bp->second.x_deps : bp->second.z_deps;
                    const bool cst = kind == 'X' ? bp->second.x_const : bp->second.z_const;
                    auto [x, z] = xz_of(conjugate_through(inv, kind));
                    absorb_into_byproduct(moved, x, z, deps, cst);
                }
                if (moved.empty()) a2.byproducts.erase(bp);
                else bp->second = moved;
            }
            a2.local_cliffords.erase(o);
            const auto [x, y, z] = bridge_exponents(c);
            wire = j_pattern(x * M_PI / 2);
            if (y >= 0) wire = concatenate_diagonal(wire, j_pattern(y * M_PI / 2));
            if (z > 0) b2.pre_cliffords[b.inputs[k]] = s_power(z);
            else b2.pre_cliffords.erase(b.inputs[k]);
        }
        bridge = k == 0 ? wire : tensor(bridge, wire);
    }
    return concatenate_diagonal(concatenate_diagonal(a2, bridge), b2);
}

namespace {

Pattern concatenate_diagonal(const Pattern &a, const Pattern &b) {
    a.validate();
    b.validate();
    std::vector<int> map(b.num_qubits, -1);
    for (std::size_t k = 0; k < b.inputs.size(); ++k) map[b.inputs[k]] = a.outputs[k];
    const auto bnb = b.neighbours();
    int next = a.num_qubits;
    for (int q = 0; q < b.num_qubits; ++q) {
        if (map[q] < 0) map[q] = next++;
    }

    Pattern r;
    r.num_qubits = next;
    r.inputs = a.inputs;
    for (int q : b.outputs) r.outputs.push_back(map[q]);

    std::set<std::pair<int, int>> es;
    auto flip_edge = [&](int x, int y) {
        auto e = ordered(x, y);
        if (!es.erase(e)) es.insert(e);
    };
    for (auto [x, y] : a.edges) flip_edge(x, y);
    for (auto [x, y] : b.edges) flip_edge(map[x], map[y]);
    r.edges.assign(es.begin(), es.end());

    r.pre_cliffords = a.pre_cliffords;
    for (const auto &[q, w] : a.local_cliffords) {
        if (!a.is_output(q)) r.local_cliffords[q] = w;
    }
    for (std::size_t k = 0; k < b.inputs.size(); ++k) {
        const int bq = b.inputs[k];
        const int o = a.outputs[k];
        const std::string join = word_or_empty(a.local_cliffords, o) + word_or_empty(b.pre_cliffords, bq);
        if (!bnb[bq].empty() && !SingleQubitClifford::from_word(join).is_diagonal())
            throw std::invalid_argument("concatenate: non-diagonal Clifford between patterns");
        const std::string w = canonical_word(join + word_or_empty(b.local_cliffords, bq));
        if (!w.empty()) r.local_cliffords[o] = w;
    }
    for (const auto &[q, w] : b.local_cliffords) {
        if (!b.is_input(q)) r.local_cliffords[map[q]] = w;
    }

    r.measurements = a.measurements;
    for (const auto &[q, m] : b.measurements) r.measurements[map[q]] = mapped(m, map);
    r.order = a.order;
    for (int q : b.order) r.order.push_back(map[q]);
    for (const auto &[q, bp] : b.byproducts) r.byproducts[map[q]] = mapped(bp, map);

    // Push a's byproducts through b's input LC, b's CZs and b's local LCs.
    for (std::size_t k = 0; k < b.inputs.size(); ++k) {
        const int o = a.outputs[k];
        const int bq = b.inputs[k];
        auto it = a.byproducts.find(o);
        if (it == a.byproducts.end()) continue;
        const Byproduct &bp = it->second;
        for (char kind : {'X', 'Z'}) {
            const DepSet &deps = kind == 'X' ? bp.x_deps : bp.z_deps;
            const bool c = kind == 'X' ? bp.x_const : bp.z_const;
            if (deps.empty() && !c) continue;
            std::map<int, std::pair<bool, bool>> pauli;  // b-qubit -> (x, z)
            pauli[bq] = xz_of(conjugate_through(word_or_empty(b.pre_cliffords, bq), kind));
            if (pauli[bq].first) {
                for (int v : bnb[bq]) pauli[v].second = !pauli[v].second;
            }
            for (auto &[v, xz] : pauli) {
                const char after = conjugate_through(word_or_empty(b.local_cliffords, v), pauli_of(xz.first, xz.second));
                xz = xz_of(after);
            }
            for (const auto &[v, xz] : pauli) {
                if (!xz.first && !xz.second) continue;
                const int mv = map[v];
                if (b.is_output(v)) absorb_into_byproduct(r.byproducts[mv], xz.first, xz.second, deps, c);
                else absorb_into_measurement(r.measurements.at(mv), xz.first, xz.second, deps, c);
            }
        }
    }
    for (auto it = r.byproducts.begin(); it != r.byproducts.end();) {
        if (it->second.empty()) it = r.byproducts.erase(it);
        else ++it;
    }
    for (auto &[q, m] : r.measurements) m = normalized(m);
    r.validate();
    return r;
}

std::optional<std::vector<std::uint8_t>> solve_gf2(std::vector<std::vector<std::uint8_t>> a, std::vector<std::uint8_t> b) {
    const std::size_t m = a.size();
    const std::size_t k = m ? a[0].size() : 0;
    std::vector<std::size_t> pivcol;
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
        pivcol.push_back(col);
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

void derive_corrections(Pattern &p) {
    if (!p.pre_cliffords.empty() || !p.local_cliffords.empty())
        throw std::invalid_argument("derive_corrections: local Cliffords not supported");
    const int n = p.num_qubits;
    for (int q = 0; q < n; ++q) {
        if (p.is_output(q)) continue;
        auto it = p.measurements.find(q);
        if (it == p.measurements.end()) throw std::invalid_argument("derive_corrections: unmeasured non-output qubit");
        if (it->second.basis == Measurement::Basis::Z)
            throw std::invalid_argument("derive_corrections: Z measurements not supported");
    }
    std::vector<std::vector<std::uint8_t>> adj(n, std::vector<std::uint8_t>(n, 0));
    for (auto [a, b] : p.edges) adj[a][b] = adj[b][a] = 1;

    std::vector<std::uint8_t> done(n, 0);
    for (int q : p.outputs) done[q] = 1;
    std::map<int, std::vector<int>> g;
    std::vector<std::vector<int>> layers;
    while (true) {
        std::vector<int> rows, cols;
        for (int q = 0; q < n; ++q) {
            if (!done[q]) rows.push_back(q);
            else if (!p.is_input(q)) cols.push_back(q);
        }
        if (rows.empty()) break;
        std::vector<std::vector<std::uint8_t>> a(rows.size(), std::vector<std::uint8_t>(cols.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j) a[i][j] = adj[rows[i]][cols[j]];
        std::vector<int> layer;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<std::uint8_t> e(rows.size(), 0);
            e[i] = 1;
            auto x = solve_gf2(a, e);
            if (!x) continue;
            std::vector<int> set;
            for (std::size_t j = 0; j < cols.size(); ++j)
                if ((*x)[j]) set.push_back(cols[j]);
            g[rows[i]] = set;
            layer.push_back(rows[i]);
        }
        if (layer.empty()) throw std::invalid_argument("derive_corrections: pattern has no flow");
        for (int q : layer) done[q] = 1;
        layers.push_back(layer);
    }

    p.order.clear();
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) p.order.insert(p.order.end(), it->begin(), it->end());
    for (auto &[q, m] : p.measurements) {
        m.sign_deps.clear();
        m.flip_deps.clear();
    }
    p.byproducts.clear();
    for (int u : p.order) {
        std::vector<std::uint8_t> odd(n, 0);
        for (int v : g[u])
            for (int w = 0; w < n; ++w) odd[w] ^= adj[v][w];
        std::vector<std::uint8_t> inx(n, 0);
        for (int v : g[u]) inx[v] = 1;
        for (int v = 0; v < n; ++v) {
            if (v == u) continue;
            const bool x = inx[v], z = odd[v];
            if (!x && !z) continue;
            if (p.is_output(v)) absorb_into_byproduct(p.byproducts[v], x, z, {u}, false);
            else absorb_into_measurement(p.measurements[v], x, z, {u}, false);
        }
    }
    for (auto &[q, m] : p.measurements) m = normalized(m);
    p.validate();
}

namespace {

// Local complementation at v, keeping the state: the new graph state differs
// by sqrt(-iX) on v and sqrt(iZ) on its neighbours, which the LC words undo.
void local_complement(GraphStateForm &f, int v) {
    std::vector<int> nb;
    for (int u = 0; u < f.n; ++u)
        if (f.adjacency[v][u]) nb.push_back(u);
    for (std::size_t i = 0; i < nb.size(); ++i)
        for (std::size_t j = i + 1; j < nb.size(); ++j) {
            f.adjacency[nb[i]][nb[j]] ^= 1;
            f.adjacency[nb[j]][nb[i]] ^= 1;
        }
    f.local_cliffords[v] = canonical_word("HSH" + f.local_cliffords[v]);
    for (int u : nb) f.local_cliffords[u] = canonical_word("SSS" + f.local_cliffords[u]);
}

bool references_are_leaves(const GraphStateForm &f, const std::vector<int> &refs) {
    std::set<int> partners;
    for (int r : refs) {
        int deg = 0, w = -1;
        for (int u = 0; u < f.n; ++u)
            if (f.adjacency[r][u]) {
                ++deg;
                w = u;
            }
        if (deg != 1 || std::find(refs.begin(), refs.end(), w) != refs.end() || !partners.insert(w).second) return false;
    }
    return true;
}

// Breadth-first search over local complementations for a form in which each
// reference has exactly one neighbour, a distinct non-reference qubit.
bool leaf_references(GraphStateForm &f, const std::vector<int> &refs) {
    if (references_are_leaves(f, refs)) return true;
    auto key = [](const GraphStateForm &g) {
        std::string s;
        for (const auto &row : g.adjacency)
            for (auto b : row) s += static_cast<char>('0' + b);
        return s;
    };
    std::set<std::string> seen{key(f)};
    std::vector<std::vector<int>> frontier{{}};
    for (int depth = 0; depth < 6 && !frontier.empty(); ++depth) {
        std::vector<std::vector<int>> next;
        for (const auto &path : frontier) {
            for (int v = 0; v < f.n; ++v) {
                GraphStateForm g = f;
                for (int u : path) local_complement(g, u);
                local_complement(g, v);
                if (!seen.insert(key(g)).second) continue;
                if (references_are_leaves(g, refs)) {
                    f = g;
                    return true;
                }
                auto p2 = path;
                p2.push_back(v);
                next.push_back(std::move(p2));
                if (seen.size() > 20000) return false;
            }
        }
        frontier = std::move(next);
    }
    return false;
}

}  // namespace

std::vector<Gate> clifford_prefix(const Pattern &p) {
    std::vector<Gate> gates;
    auto word = [&](int q, const std::string &w) {
        for (char ch : w) gates.push_back({ch == 'H' ? GateType::H : GateType::S, {q}, 0.0});
    };
    for (const auto &[q, w] : p.pre_cliffords) word(q, w);
    for (auto [a, b] : p.edges) gates.push_back({GateType::CZ, {a, b}, 0.0});
    for (const auto &[q, w] : p.local_cliffords) word(q, w);
    return gates;
}

namespace {

Reduction reduce_impl(const Pattern &p0, bool plus_inputs, bool keep_inputs) {
    p0.validate();
    Pattern p = p0;
    for (auto &[q, m] : p.measurements) m = normalized(m);
    const int n = p.num_qubits;
    const int k = plus_inputs ? 0 : static_cast<int>(p.inputs.size());
    StabilizerTableau t(n + k);
    for (int q = 0; q < n; ++q) {
        if (!p.is_input(q)) t.h(q);
    }
    for (std::size_t i = 0; i < p.inputs.size(); ++i) {
        const int q = p.inputs[i];
        if (plus_inputs) {
            t.h(q);
        } else {
            const int r = n + static_cast<int>(i);
            t.h(r);
            t.cx(r, q);
        }
    }
    for (const auto &[q, w] : p.pre_cliffords) t.apply_word(q, w);
    for (auto [a, b] : p.edges) t.cz(a, b);
    for (const auto &[q, w] : p.local_cliffords) t.apply_word(q, w);

    // Outcome of each eliminated qubit as constant xor parity of outcomes
    // that stay in the reduced pattern.
    struct Value {
        bool c = false;
        DepSet deps;
    };
    std::map<int, Value> value;
    auto substitute = [&](DepSet &d) {
        bool c = false;
        DepSet rest;
        for (int q : d) {
            auto it = value.find(q);
            if (it == value.end()) {
                toggle(rest, q);
            } else {
                c ^= it->second.c;
                toggle_all(rest, it->second.deps);
            }
        }
        d = rest;
        return c;
    };
    for (int q : p.order) {
        const Measurement &m = p.measurements.at(q);
        if (!m.is_pauli() || (keep_inputs && p.is_input(q))) continue;
        DepSet deps = m.flip_deps;
        const bool f = m.flip ^ substitute(deps);
        const char basis = basis_char(m.basis);
        const int e = t.expectation(PauliString::single(n + k, q, basis));
        const int raw = e == 0 ? (f ? 1 : 0) : (e == 1 ? 0 : 1);
        t.measure(q, basis, raw);
        value[q] = Value{(raw != 0) != f, deps};
    }

    // Drop eliminated qubits, highest index first.
    std::vector<int> kept;  // original tableau indices, ascending
    for (int q = 0; q < n + k; ++q) {
        if (!value.count(q)) kept.push_back(q);
    }
    for (auto it = value.rbegin(); it != value.rend(); ++it) t = t.without_qubit(it->first);

    // New labels: outputs, then remaining measured qubits ascending.
    std::vector<int> newidx(n, -1);
    int next = 0;
    for (int q : p.outputs) newidx[q] = next++;
    for (int q = 0; q < n; ++q) {
        if (newidx[q] < 0 && !value.count(q)) newidx[q] = next++;
    }
    const int m_new = next;

    Reduction out;
    out.eliminated = static_cast<int>(value.size());
    Pattern &r = out.pattern;
    r.num_qubits = m_new;
    for (int q : p.outputs) r.outputs.push_back(newidx[q]);
    for (int q : p.order) {
        if (value.count(q)) continue;
        Measurement m = p.measurements.at(q);
        const bool s = substitute(m.sign_deps);
        const bool f = substitute(m.flip_deps);
        if (s) m.angle = -m.angle;
        if (f) m.angle += M_PI;
        m.sign_deps = mapped(m.sign_deps, newidx);
        m.flip_deps = mapped(m.flip_deps, newidx);
        r.measurements[newidx[q]] = m;
        r.order.push_back(newidx[q]);
    }
    for (const auto &[q, b0] : p.byproducts) {
        Byproduct b = b0;
        b.x_const ^= substitute(b.x_deps);
        b.z_const ^= substitute(b.z_deps);
        b.x_deps = mapped(b.x_deps, newidx);
        b.z_deps = mapped(b.z_deps, newidx);
        if (!b.empty()) r.byproducts[newidx[q]] = b;
    }

    // Tableau position of each kept qubit; references are the trailing k.
    std::map<int, int> pos;
    for (std::size_t i = 0; i < kept.size(); ++i) pos[kept[i]] = static_cast<int>(i);
    std::vector<int> priority;
    for (int i = 0; i < k; ++i) {
        priority.push_back(pos.at(n + i));
        t.h(pos.at(n + i));
    }
    for (int q : p.outputs) priority.push_back(pos.at(q));
    for (int q : kept) {
        if (q < n && !p.is_output(q)) priority.push_back(pos.at(q));
    }
    GraphStateForm f = to_graph_state(t, priority);
    std::vector<int> refs;
    for (int i = 0; i < k; ++i) refs.push_back(pos.at(n + i));
    if (!leaf_references(f, refs)) throw std::domain_error("reduce: inputs cannot be given single-qubit attachments");
    if (!f.to_tableau().same_state(t)) throw std::logic_error("reduce: graph form drifted from the state");

    std::vector<int> label(kept.size(), -1);  // tableau position -> new index, -1 for references
    for (int q : kept) {
        if (q < n) label[pos.at(q)] = newidx[q];
    }
    for (auto [a, b] : f.edges()) {
        if (label[a] >= 0 && label[b] >= 0) r.edges.push_back(ordered(label[a], label[b]));
    }
    std::sort(r.edges.begin(), r.edges.end());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (label[i] >= 0 && !f.local_cliffords[i].empty()) r.local_cliffords[label[i]] = f.local_cliffords[i];
    }
    std::set<int> used;
    for (int i = 0; i < k; ++i) {
        const int rp = pos.at(n + i);
        std::vector<int> nb;
        for (int v = 0; v < f.n; ++v) {
            if (f.adjacency[rp][v]) nb.push_back(v);
        }
        if (nb.size() != 1 || label[nb[0]] < 0 || !used.insert(label[nb[0]]).second)
            throw std::domain_error("reduce: input " + std::to_string(i) + " does not reduce to a single input qubit");
        const int w = label[nb[0]];
        std::string lr = f.local_cliffords[rp];
        std::reverse(lr.begin(), lr.end());
        const std::string pre = canonical_word("H" + lr + "H");
        if (!pre.empty()) r.pre_cliffords[w] = pre;
        r.inputs.push_back(w);
    }
    r.validate();
    out.prefix = clifford_prefix(r);
    return out;
}

}  // namespace

Reduction reduce(const Pattern &p, bool plus_inputs) {
    try {
        return reduce_impl(p, plus_inputs, false);
    } catch (const std::domain_error &) {
        // A Pauli-measured input leaves nothing to attach the input to; keep those.
        return reduce_impl(p, plus_inputs, true);
    }
}

std::map<int, int> append_pattern(DynamicCircuit &c, const Pattern &p, const std::vector<int> &map, bool reset_fresh) {
    p.validate();
    if (static_cast<int>(map.size()) != p.num_qubits) throw std::invalid_argument("append_pattern: map size mismatch");
    for (int q = 0; q < p.num_qubits; ++q) {
        if (p.is_input(q)) continue;
        if (reset_fresh) c.reset(map[q]);
        c.h(map[q]);
    }
    for (const auto &[q, w] : p.pre_cliffords) emit_word(c, map[q], w);
    for (auto [a, b] : p.edges) c.cz(map[a], map[b]);
    for (const auto &[q, w] : p.local_cliffords) emit_word(c, map[q], w);

    std::map<int, int> cbit;
    auto cbits_of = [&](const DepSet &d) {
        std::vector<int> out;
        for (int q : d) out.push_back(cbit.at(q));
        return out;
    };
    for (int q : p.order) {
        const Measurement m = normalized(p.measurements.at(q));
        const int cq = map[q];
        const int cb = c.add_cbit();
        if (m.basis == Measurement::Basis::Z) {
            if (m.flip) c.x(cq);
            if (!m.flip_deps.empty()) c.conditional(cbits_of(m.flip_deps), Gate{GateType::X, {cq}, 0.0});
        } else {
            const double phi = m.basis == Measurement::Basis::X ? 0.0
                               : m.basis == Measurement::Basis::Y ? M_PI / 2
                                                                  : m.angle;
            if (m.flip) c.z(cq);
            if (!m.flip_deps.empty()) c.conditional(cbits_of(m.flip_deps), Gate{GateType::Z, {cq}, 0.0});
            if (phi != 0.0) c.rz(cq, -phi);
            if (!m.sign_deps.empty()) c.conditional(cbits_of(m.sign_deps), Gate{GateType::RZ, {cq}, 2 * phi});
            c.h(cq);
        }
        c.measure(cq, cb);
        cbit[q] = cb;
    }
    for (const auto &[q, b] : p.byproducts) {
        const int cq = map[q];
        if (b.x_const) c.x(cq);
        if (!b.x_deps.empty()) c.conditional(cbits_of(b.x_deps), Gate{GateType::X, {cq}, 0.0});
        if (b.z_const) c.z(cq);
        if (!b.z_deps.empty()) c.conditional(cbits_of(b.z_deps), Gate{GateType::Z, {cq}, 0.0});
    }
    return cbit;
}

DynamicCircuit compile_to_circuit(const Pattern &p) {
    for (const auto &[q, m] : p.measurements) {
        if (m.is_pauli() && !p.is_input(q))
            throw std::invalid_argument("compile_to_circuit: pattern not reduced (Pauli-measured qubit " +
                                                      std::to_string(q) + ")");
    }
    DynamicCircuit c(p.num_qubits, 0);
    std::vector<int> map(p.num_qubits);
    std::iota(map.begin(), map.end(), 0);
    append_pattern(c, p, map, false);
    return c;
}

QuantumState embed_input(const Pattern &p, const QuantumState &in) {
    const int k = static_cast<int>(p.inputs.size());
    if (in.num_qubits() != k) throw std::invalid_argument("pattern input size mismatch");
    const int n = p.num_qubits;
    std::vector<cdouble> amps(std::size_t{1} << n, 0.0);
    for (std::uint64_t x = 0; x < (std::uint64_t{1} << k); ++x) {
        std::uint64_t idx = 0;
        for (int i = 0; i < k; ++i) {
            if (x >> (k - 1 - i) & 1) idx |= std::uint64_t{1} << (n - 1 - p.inputs[i]);
        }
        amps[idx] = in.amplitude(x);
    }
    return QuantumState(n, amps);
}

QuantumState extract_output(const Pattern &p, const QuantumState &full) {
    const int n = p.num_qubits;
    if (full.num_qubits() != n) throw std::invalid_argument("extract_output: size mismatch");
    std::uint64_t fixed = 0, mask = 0;
    for (int q = 0; q < n; ++q) {
        if (p.is_output(q)) continue;
        const double p1 = full.prob_one(q);
        if (p1 > 1e-9 && p1 < 1 - 1e-9) throw std::logic_error("extract_output: qubit not in a basis state");
        mask |= std::uint64_t{1} << (n - 1 - q);
        if (p1 > 0.5) fixed |= std::uint64_t{1} << (n - 1 - q);
    }
    const int k = static_cast<int>(p.outputs.size());
    std::vector<cdouble> amps(std::size_t{1} << k);
    for (std::uint64_t x = 0; x < amps.size(); ++x) {
        std::uint64_t idx = fixed;
        for (int i = 0; i < k; ++i) {
            if (x >> (k - 1 - i) & 1) idx |= std::uint64_t{1} << (n - 1 - p.outputs[i]);
        }
        amps[x] = full.amplitude(idx);
    }
    QuantumState s(k, amps);
    s.normalize();
    return s;
}

namespace {

DynamicCircuit lowered(const Pattern &p) {
    DynamicCircuit c(p.num_qubits, 0);
    std::vector<int> map(p.num_qubits);
    std::iota(map.begin(), map.end(), 0);
    append_pattern(c, p, map, false);
    return c;
}

}  // namespace

QuantumState simulate_pattern(const Pattern &p, const QuantumState &in, const std::vector<int> &outcomes) {
    if (outcomes.size() != p.order.size()) throw std::invalid_argument("simulate_pattern: one outcome per measurement");
    const QuantumState init = embed_input(p, in);
    RunResult r;
    try {
        r = run_forced(lowered(p), outcomes, &init);
    } catch (const std::runtime_error &) {
        throw std::runtime_error("simulate_pattern: impossible forced outcome");
    }
    return extract_output(p, r.state);
}

QuantumState simulate_pattern(const Pattern &p, const QuantumState &in, Rng &rng) {
    const QuantumState init = embed_input(p, in);
    return extract_output(p, run_exact(lowered(p), rng, &init).state);
}

namespace {

std::string fmt_angle(double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", a);
    return buf;
}

double parse_angle(const std::string &tok, const std::map<std::string, double> &params) {
    std::string s = tok;
    double sign = 1.0;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        if (s[0] == '-') sign = -1.0;
        s = s.substr(1);
    }
    if (s.empty()) throw std::invalid_argument("pattern: empty angle");
    // optional "<number>*" factor
    double factor = 1.0;
    auto star = s.find('*');
    if (star != std::string::npos) {
        factor = std::stod(s.substr(0, star));
        s = s.substr(star + 1);
    }
    double base;
    if (s.rfind("pi", 0) == 0) {
        base = M_PI;
        if (s.size() > 2) {
            if (s[2] != '/') throw std::invalid_argument("pattern: bad angle '" + tok + "'");
            base /= std::stod(s.substr(3));
        }
    } else if (std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_') {
        auto it = params.find(s);
        if (it == params.end()) throw std::invalid_argument("pattern: unbound parameter '" + s + "'");
        base = it->second;
    } else {
        std::size_t used = 0;
        base = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("pattern: bad angle '" + tok + "'");
    }
    return sign * factor * base;
}

int parse_label(const std::string &tok, int n) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &used);
    } catch (const std::exception &) {
        throw std::invalid_argument("pattern: expected a qubit label, got '" + tok + "'");
    }
    if (used != tok.size()) throw std::invalid_argument("pattern: expected a qubit label, got '" + tok + "'");
    if (v < 1 || (n > 0 && v > n)) throw std::invalid_argument("pattern: qubit label out of range: " + tok);
    return v - 1;
}

std::string join_labels(const std::vector<int> &v) {
    std::string s;
    for (int q : v) s += " " + std::to_string(q + 1);
    return s;
}

}  // namespace

std::string to_text(const Pattern &p) {
    std::ostringstream os;
    os << "QUBITS\n";
    os << "n " << p.num_qubits << "\n";
    os << "inputs" << join_labels(p.inputs) << "\n";
    os << "outputs" << join_labels(p.outputs) << "\n";
    os << "EDGES\n";
    for (auto [a, b] : p.edges) os << a + 1 << " " << b + 1 << "\n";
    if (!p.pre_cliffords.empty() || !p.local_cliffords.empty()) {
        os << "CLIFFORD\n";
        for (const auto &[q, w] : p.pre_cliffords) os << q + 1 << " pre " << w << "\n";
        for (const auto &[q, w] : p.local_cliffords) os << q + 1 << " post " << w << "\n";
    }
    os << "MEASURE\n";
    for (const auto &[q, m] : p.measurements) {
        os << q + 1 << " " << basis_char(m.basis);
        if (m.basis == Measurement::Basis::R) os << " " << fmt_angle(m.angle);
        if (m.flip) os << " const";
        if (!m.sign_deps.empty()) os << " sign" << join_labels(m.sign_deps);
        if (!m.flip_deps.empty()) os << " flip" << join_labels(m.flip_deps);
        os << "\n";
    }
    os << "BYPRODUCT\n";
    for (const auto &[q, b] : p.byproducts) {
        if (b.x_const || !b.x_deps.empty()) os << q + 1 << " X" << (b.x_const ? " const" : "") << join_labels(b.x_deps) << "\n";
        if (b.z_const || !b.z_deps.empty()) os << q + 1 << " Z" << (b.z_const ? " const" : "") << join_labels(b.z_deps) << "\n";
    }
    os << "ORDER\n";
    os << (p.order.empty() ? "" : join_labels(p.order).substr(1)) << "\n";
    return os.str();
}

Pattern parse_pattern(std::istream &in, const std::map<std::string, double> &params) {
    Pattern p;
    std::string section;
    bool saw_byproduct = false, saw_order = false, saw_n = false;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        auto where = [&] { return " (line " + std::to_string(lineno) + ")"; };
        if (tok.size() == 1 && (tok[0] == "QUBITS" || tok[0] == "EDGES" || tok[0] == "CLIFFORD" || tok[0] == "MEASURE" ||
                                tok[0] == "BYPRODUCT" || tok[0] == "ORDER")) {
            section = tok[0];
            if (section == "BYPRODUCT") saw_byproduct = true;
            if (section == "ORDER") saw_order = true;
            continue;
        }
        if (section.empty()) throw std::invalid_argument("pattern: content before first section" + where());
        if (section != "QUBITS" && !saw_n) throw std::invalid_argument("pattern: QUBITS section must come first" + where());
        const int n = p.num_qubits;
        if (section == "QUBITS") {
            if (tok[0] == "n" && tok.size() == 2) {
                p.num_qubits = std::stoi(tok[1]);
                if (p.num_qubits < 1) throw std::invalid_argument("pattern: qubit count must be positive" + where());
                saw_n = true;
            } else if (tok[0] == "inputs" || tok[0] == "outputs") {
                if (!saw_n) throw std::invalid_argument("pattern: 'n' must precede inputs/outputs" + where());
                auto &v = tok[0] == "inputs" ? p.inputs : p.outputs;
                for (std::size_t i = 1; i < tok.size(); ++i) v.push_back(parse_label(tok[i], n));
            } else {
                throw std::invalid_argument("pattern: unknown QUBITS entry '" + tok[0] + "'" + where());
            }
        } else if (section == "EDGES") {
            if (tok.size() != 2) throw std::invalid_argument("pattern: edge needs two labels" + where());
            p.edges.push_back({parse_label(tok[0], n), parse_label(tok[1], n)});
        } else if (section == "CLIFFORD") {
            if (tok.size() != 3 || (tok[1] != "pre" && tok[1] != "post"))
                throw std::invalid_argument("pattern: expected '<q> pre|post WORD'" + where());
            (tok[1] == "pre" ? p.pre_cliffords : p.local_cliffords)[parse_label(tok[0], n)] = tok[2];
        } else if (section == "MEASURE") {
            if (tok.size() < 2) throw std::invalid_argument("pattern: expected '<q> BASIS ...'" + where());
            Measurement m;
            const int q = parse_label(tok[0], n);
            std::size_t i = 2;
            if (tok[1] == "X") m.basis = Measurement::Basis::X;
            else if (tok[1] == "Y") m.basis = Measurement::Basis::Y;
            else if (tok[1] == "Z") m.basis = Measurement::Basis::Z;
            else if (tok[1] == "R") {
                m.basis = Measurement::Basis::R;
                if (tok.size() < 3) throw std::invalid_argument("pattern: R needs an angle" + where());
                m.angle = parse_angle(tok[2], params);
                i = 3;
            } else {
                throw std::invalid_argument("pattern: unknown basis '" + tok[1] + "'" + where());
            }
            DepSet *target = nullptr;
            for (; i < tok.size(); ++i) {
                if (tok[i] == "const") m.flip = !m.flip;
                else if (tok[i] == "sign") target = &m.sign_deps;
                else if (tok[i] == "flip") target = &m.flip_deps;
                else if (target) toggle(*target, parse_label(tok[i], n));
                else throw std::invalid_argument("pattern: unexpected token '" + tok[i] + "'" + where());
            }
            if (m.flip && m.basis == Measurement::Basis::R) {
                m.flip = false;
                m.angle += M_PI;
            }
            if (!p.measurements.emplace(q, m).second) throw std::invalid_argument("pattern: qubit measured twice" + where());
        } else if (section == "BYPRODUCT") {
            if (tok.size() < 2 || (tok[1] != "X" && tok[1] != "Z"))
                throw std::invalid_argument("pattern: expected '<q> X|Z [const] deps...'" + where());
            Byproduct &b = p.byproducts[parse_label(tok[0], n)];
            const bool x = tok[1] == "X";
            for (std::size_t i = 2; i < tok.size(); ++i) {
                if (tok[i] == "const") (x ? b.x_const : b.z_const) ^= true;
                else toggle(x ? b.x_deps : b.z_deps, parse_label(tok[i], n));
            }
        } else if (section == "ORDER") {
            for (const auto &t : tok) p.order.push_back(parse_label(t, n));
        }
    }
    if (!saw_n) throw std::invalid_argument("pattern: missing QUBITS section");
    if (!saw_byproduct && !saw_order) {
        derive_corrections(p);
    } else if (!saw_order) {
        for (const auto &[q, m] : p.measurements) p.order.push_back(q);
    }
    p.validate();
    return p;
}

}  // namespace mbvqe
