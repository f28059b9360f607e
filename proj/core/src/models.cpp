#include "mbvqe/models.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mbvqe {

namespace {

std::string ops_string(int n, const std::map<int, char> &ops) {
    std::string s(static_cast<std::size_t>(n), 'I');
    for (auto [q, c] : ops) s[static_cast<std::size_t>(q)] = c;
    return s;
}

struct Lattice {
    int M, N;
    int h(int r, int c) const { return r * (2 * N + 1) + c; }
    int v(int r, int c) const { return r * (2 * N + 1) + N + c; }
};

}  // namespace

int pc_num_qubits(int M, int N) {
    if (M < 1 || N < 1) throw std::invalid_argument("planar code: M and N must be positive");
    return (M + 1) * N + M * (N + 1);
}

Hamiltonian planar_code_hamiltonian(int M, int N, double xi) {
    const int n = pc_num_qubits(M, N);
    const Lattice lat{M, N};
    std::vector<PauliTerm> terms;
    for (int r = 0; r < M; ++r)
        for (int c = 0; c < N; ++c) {
            std::map<int, char> ops{{lat.h(r, c), 'X'}, {lat.h(r + 1, c), 'X'}, {lat.v(r, c), 'X'}, {lat.v(r, c + 1), 'X'}};
            terms.push_back({-1.0, PauliString(ops_string(n, ops))});
        }
    for (int r = 0; r <= M; ++r)
        for (int c = 0; c <= N; ++c) {
            std::map<int, char> ops;
            if (c > 0) ops[lat.h(r, c - 1)] = 'Z';
            if (c < N) ops[lat.h(r, c)] = 'Z';
            if (r > 0) ops[lat.v(r - 1, c)] = 'Z';
            if (r < M) ops[lat.v(r, c)] = 'Z';
            terms.push_back({-1.0, PauliString(ops_string(n, ops))});
        }
    for (int q = 0; q < n; ++q) terms.push_back({xi, PauliString::single(n, q, 'Z')});
    return Hamiltonian(n, terms);
}

Hamiltonian su3_hamiltonian(double mass, double x) {
    if (x == 0.0) throw std::invalid_argument("su3: coupling must be nonzero");
    std::vector<PauliTerm> t{{-0.5, PauliString("XZZ")}, {-0.5, PauliString("ZXZ")}, {-0.5, PauliString("ZZX")}};
    const Hamiltonian num = su3_number();
    for (const auto &p : num.terms()) t.push_back({mass * p.coeff, p.string});
    const double e = 1.0 / (6.0 * x);
    t.push_back({3 * e, PauliString("III")});
    for (const char *s : {"ZZI", "ZIZ", "IZZ"}) t.push_back({-e, PauliString(s)});
    return Hamiltonian(3, t);
}

Hamiltonian su3_number() {
    return Hamiltonian(3, {{3.0, PauliString("III")}, {-1.0, PauliString("ZII")}, {-1.0, PauliString("IZI")}, {-1.0, PauliString("IIZ")}});
}

Hamiltonian su3_number_prime() {
    std::vector<PauliTerm> t{{1.0, PauliString("III")}};
    for (const char *s : {"ZII", "IZI", "IIZ"}) t.push_back({-2.0 / 3.0, PauliString(s)});
    for (const char *s : {"ZZI", "ZIZ", "IZZ"}) t.push_back({1.0 / 3.0, PauliString(s)});
    return Hamiltonian(3, t);
}

Hamiltonian z2_hamiltonian(double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("z2: lambda must be positive");
    std::vector<PauliTerm> t{{lambda, PauliString("XXXX")}};
    for (int q = 0; q < 4; ++q) t.push_back({1.0 / lambda, PauliString::single(4, q, 'Z')});
    return Hamiltonian(4, t);
}

ClosedForm z2_exact_gs(double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("z2: lambda must be positive");
    // {|0000>, |1111>} block: [[4/l, l], [l, -4/l]]
    const double a = 4.0 / lambda;
    const double r = std::sqrt(a * a + lambda * lambda);
    double c0 = lambda, c1 = -(a + r);
    const double norm = std::hypot(c0, c1);
    std::vector<cdouble> amps(16, 0.0);
    amps[0] = c0 / norm;
    amps[15] = c1 / norm;
    return {-r, QuantumState(4, amps)};
}

namespace {

constexpr const char *kLiHTable = R"(-0.0938 IIIZ
-0.00318 IIZX
0.00318 IIIX
-0.00125 IIXX
0.00125 IIYY
-0.212 IIZZ
0.0192 IIXZ
0.0192 IIXI
0.358 IIZI
0.0938 IZII
0.00318 ZXII
0.00318 IXII
-0.00125 XXII
0.00125 YYII
-0.212 ZZII
-0.0192 XZII
0.0192 XIII
-0.358 ZIII
-0.122 IZIZ
0.0121 IZZX
-0.0121 IZIX
0.0317 IZXX
-0.0317 IZYY
0.0121 IXIZ
0.0121 ZXIZ
-0.00327 IXZX
-0.00327 ZXZX
0.00327 IXIX
0.00327 ZXIX
-0.00865 IXXX
-0.00865 ZXXX
0.00865 IXYY
0.00865 ZXYY
0.0317 YYIZ
-0.0317 XXIZ
-0.00865 YYZX
0.00865 XXZX
0.00865 YYIX
-0.00865 XXIX
-0.031 YYXX
0.031 XXXX
0.031 YYYY
-0.031 XXYY
0.0559 ZZIZ
0.00187 ZZZX
-0.00187 ZZIX
0.0031 ZZXX
-0.0031 ZZYY
0.0128 XIIZ
-0.0128 XZIZ
-0.00235 XIZX
0.00235 XZZX
0.00235 XIIX
-0.00235 XZIX
-0.00798 XIXX
0.00797 XZXX
0.00797 XIYY
-0.00797 XZYY
0.113 ZIIZ
-0.0108 ZIZX
0.0108 ZIIX
-0.0336 ZIXX
0.0336 ZIYY
-0.0559 IZZZ
-0.0128 IZXZ
-0.0128 IZXI
-0.00187 IXZZ
-0.00187 ZXZZ
0.00235 IXXZ
0.00235 ZXXZ
0.00235 IXXI
0.00235 ZXXI
-0.0031 YYZZ
0.0031 XXZZ
0.00798 YYXZ
-0.00798 XXXZ
0.00798 YYXI
-0.00798 XXXI
0.0845 ZZZZ
-0.00899 ZZXZ
-0.00899 ZZXI
-0.00899 XIZZ
0.00899 XZZZ
0.00661 XIXZ
-0.00661 XZXZ
0.00661 XIXI
-0.00661 XZXI
0.0604 ZIZZ
0.011 ZIXZ
0.011 ZIXI
0.113 IZZI
-0.0108 IXZI
-0.0108 ZXZI
-0.0336 YYZI
0.0336 XXZI
-0.0604 ZZZI
-0.011 XIZI
-0.011 XZZI
-0.113 ZIZI
-7.012 IIII)";
constexpr std::size_t kLiHTerms = 100;
constexpr double kLiHCoeffSum = -7.35107;

}  // namespace

Hamiltonian lih_hamiltonian() {
    std::istringstream in(kLiHTable);
    std::vector<PauliTerm> t;
    double coeff;
    std::string ops;
    double sum = 0.0;
    while (in >> coeff >> ops) {
        t.push_back({coeff, PauliString(ops)});
        sum += coeff;
    }
    if (t.size() != kLiHTerms || std::abs(sum - kLiHCoeffSum) > 1e-9)
        throw std::runtime_error("lih_hamiltonian: embedded table checksum mismatch");
    return Hamiltonian(4, t);
}

namespace {

using Vec = Eigen::VectorXcd;

Vec apply_h(const Hamiltonian &h, const Vec &v) {
    Vec out = Vec::Zero(v.size());
    for (const auto &t : h.terms()) {
        const auto xm = t.string.x_mask(), zm = t.string.z_mask();
        const cdouble ph = t.coeff * std::pow(cdouble(0, 1), static_cast<int>(t.string.y_count()));
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double sign = (__builtin_popcountll(static_cast<std::uint64_t>(i) & zm) & 1) ? -1.0 : 1.0;
            out[static_cast<Eigen::Index>(static_cast<std::uint64_t>(i) ^ xm)] += ph * sign * v[i];
        }
    }
    return out;
}

void orthogonalize(Vec &v, const std::vector<Vec> &basis) {
    for (int pass = 0; pass < 2; ++pass)
        for (const auto &b : basis) v -= b * b.dot(v);
}

// Lowest eigenpair of h restricted to the complement of `locked`.
std::pair<double, Vec> lanczos_lowest(const Hamiltonian &h, const std::vector<Vec> &locked, std::mt19937_64 &rng) {
    const Eigen::Index dim = Eigen::Index{1} << h.num_qubits();
    std::normal_distribution<double> g;
    Vec x(dim);
    for (Eigen::Index i = 0; i < dim; ++i) x[i] = cdouble(g(rng), g(rng));
    orthogonalize(x, locked);
    x.normalize();
    double theta = 0.0;
    const int m = static_cast<int>(std::min<Eigen::Index>(120, dim - static_cast<Eigen::Index>(locked.size())));
    for (int restart = 0; restart < 50; ++restart) {
        std::vector<Vec> q{x};
        std::vector<double> alpha, beta;
        for (int j = 0; j < m; ++j) {
            Vec w = apply_h(h, q[j]);
            orthogonalize(w, locked);
            alpha.push_back(q[j].dot(w).real());
            orthogonalize(w, q);
            const double b = w.norm();
            if (j + 1 == m || b < 1e-12) break;
            beta.push_back(b);
            q.push_back(w / b);
        }
        const int k = static_cast<int>(alpha.size());
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
        for (int i = 0; i < k; ++i) {
            t(i, i) = alpha[i];
            if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        theta = es.eigenvalues()[0];
        x = Vec::Zero(dim);
        for (int i = 0; i < k; ++i) x += es.eigenvectors()(i, 0) * q[i];
        orthogonalize(x, locked);
        x.normalize();
        Vec r = apply_h(h, x);
        orthogonalize(r, locked);
        r -= theta * x;
        if (r.norm() < 1e-9) break;
    }
    return {theta, x};
}

}  // namespace

Spectrum exact_diagonalize(const Hamiltonian &h, int levels, std::size_t dense_cap) {
    const std::size_t n = h.num_qubits();
    if (n > kDenseQubitCap) throw std::invalid_argument("exact_diagonalize: more than 14 qubits");
    if (levels < 1) throw std::invalid_argument("exact_diagonalize: levels must be positive");
    const std::size_t dim = std::size_t{1} << n;
    levels = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(levels), dim));
    Spectrum s;
    Vec ground;
    if (n <= dense_cap) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(to_matrix(h));
        for (int i = 0; i < levels; ++i) s.energies.push_back(es.eigenvalues()[i]);
        ground = es.eigenvectors().col(0);
    } else {
        std::mt19937_64 rng(12345);
        std::vector<Vec> locked;
        for (int i = 0; i < levels; ++i) {
            auto [e, v] = lanczos_lowest(h, locked, rng);
            s.energies.push_back(e);
            locked.push_back(v);
        }
        // Deflation can return levels slightly out of order when nearly degenerate.
        std::vector<int> idx(s.energies.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return s.energies[a] < s.energies[b]; });
        std::vector<double> sorted;
        for (int i : idx) sorted.push_back(s.energies[i]);
        s.energies = sorted;
        ground = locked[idx[0]];
    }
    s.e0 = s.energies[0];
    s.e1 = s.energies.size() > 1 ? s.energies[1] : s.e0;
    s.e2 = s.energies.size() > 2 ? s.energies[2] : s.e1;
    s.gap = s.e1 - s.e0;
    s.near_degenerate = s.gap < 1e-6;
    s.ground = QuantumState(static_cast<int>(n), std::vector<cdouble>(ground.data(), ground.data() + ground.size()));
    return s;
}

double pc_unperturbed_energy(int M, int N) {
    if (M < 1 || N < 1) throw std::invalid_argument("planar code: M and N must be positive");
    return -(M * N + (M - 1) * (N - 1) + 2 * (M + N - 2) + 4);
}

double pc_perturbative_energy(int M, int N, double xi) {
    const int n = pc_num_qubits(M, N);
    if (n > 14) throw std::invalid_argument("pc_perturbative_energy: lattice too large");
    const Hamiltonian h0 = planar_code_hamiltonian(M, N, 0.0);
    // Ground state: plaquette projectors applied to |0...0>, which already
    // satisfies every star.
    QuantumState psi(n);
    for (const auto &t : h0.terms()) {
        if (t.string.x_mask() == 0) continue;
        QuantumState flipped = psi;
        flipped.apply_pauli(t.string);
        for (std::size_t i = 0; i < psi.amplitudes().size(); ++i)
            psi.amplitudes()[i] = 0.5 * (psi.amplitudes()[i] + flipped.amplitudes()[i]);
    }
    psi.normalize();
    const double e0 = psi.expectation(h0);
    // Each Z_i psi is an H0 eigenvector; sum the ones sharing an energy
    // coherently since some coincide up to sign.
    std::map<long, QuantumState> by_energy;
    for (int q = 0; q < n; ++q) {
        QuantumState z = psi;
        z.apply_pauli(PauliString::single(n, q, 'Z'));
        const long key = std::lround(z.expectation(h0) * 1e6);
        auto it = by_energy.find(key);
        if (it == by_energy.end()) {
            by_energy.emplace(key, z);
        } else {
            for (std::size_t i = 0; i < z.amplitudes().size(); ++i) it->second.amplitudes()[i] += z.amplitudes()[i];
        }
    }
    double e2 = 0.0;
    for (const auto &[key, phi] : by_energy) {
        const double en = key * 1e-6;
        if (std::abs(en - e0) < 1e-9) {
            if (phi.norm() > 1e-9) throw std::domain_error("pc_perturbative_energy: degenerate coupling");
            continue;
        }
        e2 += phi.norm() * phi.norm() / (e0 - en);
    }
    return e0 + xi * xi * e2;
}

bool GraphAnsatzSpec::is_pivot(int q) const { return std::find(pivots.begin(), pivots.end(), q) != pivots.end(); }

GraphAnsatzSpec pc_graph_ansatz(int M, int N, int layers) {
    if (layers < 1) throw std::invalid_argument("pc_graph_ansatz: need at least one layer");
    GraphAnsatzSpec s;
    s.M = M;
    s.N = N;
    s.layers = layers;
    s.num_qubits = pc_num_qubits(M, N);
    // 1-based labels below, matching the lattice numbering.
    std::vector<std::pair<int, int>> e;
    std::vector<int> piv, vc, ec;
    if (M == 1 && N == 1) {
        piv = {1};
        e = {{1, 2}, {1, 3}, {1, 4}};
        vc = {0, 1, 1, 1};
        ec = {0, 0, 0};
    } else if (M == 2 && N == 1) {
        piv = {1, 4};
        e = {{1, 2}, {1, 3}, {1, 5}, {1, 6}, {1, 7}, {4, 5}, {4, 6}, {4, 7}};
        vc = {0, 2, 2, 1, 3, 3, 3};
        ec = {0, 0, 1, 1, 1, 2, 2, 2};
    } else if (M == 1 && N == 2) {
        piv = {1, 2};
        e = {{1, 3}, {1, 4}, {1, 6}, {2, 4}, {2, 5}, {2, 7}};
        vc = {0, 0, 1, 2, 1, 1, 1};
        ec = {0, 1, 0, 1, 0, 0};
    } else if (M == 2 && N == 2) {
        // Classes follow the 180-degree rotation of the lattice.
        piv = {1, 2, 11, 12};
        e = {{1, 3}, {1, 4}, {1, 6}, {2, 4}, {2, 5}, {2, 7}, {11, 6}, {11, 8}, {11, 9}, {12, 7}, {12, 9}, {12, 10}};
        // 1<->12 2<->11 3<->10 4<->9 5<->8 6<->7
        vc = {0, 1, 2, 3, 4, 5, 5, 4, 3, 2, 1, 0};
        // 1-3<->12-10, 1-4<->12-9, 1-6<->12-7, 2-4<->11-9, 2-5<->11-8, 2-7<->11-6
        ec = {0, 1, 2, 3, 4, 5, 5, 4, 3, 2, 1, 0};
    } else {
        throw std::invalid_argument("pc_graph_ansatz: supported lattices are (1,1), (2,1), (1,2), (2,2)");
    }
    for (int p : piv) s.pivots.push_back(p - 1);
    for (auto [a, b] : e) s.edges.push_back({a - 1, b - 1});
    s.vertex_class = vc;
    s.edge_class = ec;
    s.num_vertex_classes = *std::max_element(vc.begin(), vc.end()) + 1;
    s.num_edge_classes = *std::max_element(ec.begin(), ec.end()) + 1;
    return s;
}

}  // namespace mbvqe
