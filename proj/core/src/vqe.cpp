#include "mbvqe/vqe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mbvqe/pattern.hpp"

namespace mbvqe {

namespace {

constexpr double kTwoPi = 2 * M_PI;

bool is_entangling(GateType g) { return g == GateType::CZ || g == GateType::CX; }

AnsatzOp fixed(GateType g, std::vector<int> q) {
    AnsatzOp op;
    op.gate = g;
    op.qubits = std::move(q);
    return op;
}

AnsatzOp rot(GateType g, int q, int slot) {
    AnsatzOp op;
    op.kind = AnsatzOp::Kind::Rot;
    op.gate = g;
    op.qubits = {q};
    op.slot = slot;
    return op;
}

// Adds one slot bound to parameter p.
int bind(Ansatz &a, int p) {
    a.slot_param.push_back(p);
    return a.num_slots() - 1;
}

void rotation_layer(Ansatz &a, GateType g, int n, int param) {
    for (int q = 0; q < n; ++q) a.ops.push_back(rot(g, q, bind(a, param)));
}

void gadget_op(Ansatz &a, const PauliString &axis, int param) {
    if (static_cast<int>(axis.size()) != a.num_reg) throw std::invalid_argument("gadget axis arity mismatch");
    if (axis.is_identity()) throw std::invalid_argument("gadget axis is the identity");
    AnsatzOp op;
    op.kind = AnsatzOp::Kind::Gadget;
    op.axis = axis;
    op.slot = bind(a, param);
    a.ops.push_back(op);
    a.ancilla = true;
}

void check_nan(double v, const std::vector<double> &x) {
    if (!std::isnan(v)) return;
    std::string s = "objective returned NaN at (";
    for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + std::to_string(x[i]);
    throw std::runtime_error(s + ")");
}

class Recorder {
public:
    explicit Recorder(const Objective &f) : f_(f) {}
    double operator()(const std::vector<double> &x) {
        const auto [v, s] = f_(x);
        check_nan(v, x);
        best_ = std::min(best_, v);
        trace.push_back({x, v, s, best_});
        return v;
    }
    std::vector<TracePoint> trace;

private:
    const Objective &f_;
    double best_ = std::numeric_limits<double>::infinity();
};

OptimizeResult finish(std::vector<TracePoint> trace) {
    OptimizeResult r;
    if (trace.empty()) return r;
    const auto it = std::min_element(trace.begin(), trace.end(),
                                     [](const TracePoint &a, const TracePoint &b) { return a.energy < b.energy; });
    r.theta = it->theta;
    r.value = it->energy;
    r.trace = std::move(trace);
    return r;
}

// Local search on an existing recorder so DIRECT and the polish share a trace.
void local_search(Recorder &rec, std::vector<double> x0, int budget, double rho, double rho_end) {
    const int d = static_cast<int>(x0.size());
    if (budget <= 0) return;
    if (d == 0) {
        rec(x0);
        return;
    }
    const std::size_t stop = rec.trace.size() + static_cast<std::size_t>(budget);
    auto out_of_budget = [&] { return rec.trace.size() >= stop; };

    std::vector<Eigen::VectorXd> y;
    std::vector<double> fy;
    auto to_vec = [](const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto eval = [&](const Eigen::VectorXd &v) { return rec(to_vec(v)); };

    Eigen::VectorXd base = Eigen::Map<Eigen::VectorXd>(x0.data(), d);
    y.push_back(base);
    fy.push_back(eval(base));
    for (int i = 0; i < d && !out_of_budget(); ++i) {
        Eigen::VectorXd v = base;
        v[i] += rho;
        y.push_back(v);
        fy.push_back(eval(v));
    }
    if (static_cast<int>(y.size()) < d + 1) return;

    while (!out_of_budget() && rho >= rho_end) {
        const int b = static_cast<int>(std::min_element(fy.begin(), fy.end()) - fy.begin());
        Eigen::MatrixXd A(d, d);
        Eigen::VectorXd rhs(d);
        std::vector<int> idx;
        for (int i = 0, r = 0; i <= d; ++i) {
            if (i == b) continue;
            A.row(r) = (y[i] - y[b]).transpose();
            rhs[r] = fy[i] - fy[b];
            idx.push_back(i);
            ++r;
        }
        // Far points first, then a degenerate simplex, then the model step.
        int far = -1;
        double far_dist = 0.0;
        for (int r = 0; r < d; ++r) {
            const double dist = A.row(r).norm();
            if (dist > far_dist) far_dist = dist, far = r;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(A / rho, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double smin = svd.singularValues()[d - 1];
        if (far_dist > 2 * rho || smin < 0.1) {
            int j = far;
            if (far_dist <= 2 * rho) svd.matrixU().col(d - 1).cwiseAbs().maxCoeff(&j);
            Eigen::VectorXd v = y[b] + rho * svd.matrixV().col(d - 1);
            if (far_dist > 2 * rho) {
                // Keep the direction of the old point but pull it in.
                v = y[b] + rho * A.row(j).transpose() / A.row(j).norm();
            }
            y[idx[j]] = v;
            fy[idx[j]] = eval(v);
            continue;
        }
        const Eigen::VectorXd g = A.colPivHouseholderQr().solve(rhs);
        const double gn = g.norm();
        if (gn == 0.0 || !std::isfinite(gn)) {
            rho /= 2;
            continue;
        }
        const Eigen::VectorXd x = y[b] - rho * g / gn;
        const double fx = eval(x);
        if (fx < fy[b]) {
            int j = 0;
            double dmax = -1.0;
            for (int r = 0; r < d; ++r) {
                const double dist = (y[idx[r]] - x).norm();
                if (dist > dmax) dmax = dist, j = r;
            }
            y[idx[j]] = x;
            fy[idx[j]] = fx;
        } else if (far_dist > rho * (1 + 1e-9)) {
            y[idx[far]] = x;
            fy[idx[far]] = fx;
        } else {
            rho /= 2;
        }
    }
}

struct Rect {
    std::vector<double> center;  // unit cube
    std::vector<int> level;      // side 3^-level per dimension
    double f = 0.0;
    double size() const {
        double s = 0.0;
        for (int k : level) s += std::pow(9.0, -k);
        return 0.5 * std::sqrt(s);
    }
};

// Potentially optimal rectangles: lower-right convex hull of (size, f).
std::vector<std::size_t> potentially_optimal(const std::vector<Rect> &rects, double fmin) {
    std::map<double, std::size_t> best_of_size;
    for (std::size_t i = 0; i < rects.size(); ++i) {
        const double s = rects[i].size();
        auto it = best_of_size.find(s);
        if (it == best_of_size.end() || rects[i].f < rects[it->second].f) best_of_size[s] = i;
    }
    std::vector<std::pair<double, std::size_t>> pts(best_of_size.begin(), best_of_size.end());
    // Drop sizes below the overall best rectangle's size.
    std::size_t start = 0;
    double fbest = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (rects[pts[k].second].f <= fbest) fbest = rects[pts[k].second].f, start = k;
    }
    std::vector<std::pair<double, std::size_t>> hull;
    for (std::size_t k = start; k < pts.size(); ++k) {
        const double s = pts[k].first, f = rects[pts[k].second].f;
        while (hull.size() >= 2) {
            const auto &[s1, i1] = hull[hull.size() - 2];
            const auto &[s2, i2] = hull.back();
            const double f1 = rects[i1].f, f2 = rects[i2].f;
            if ((f2 - f1) * (s - s1) >= (f - f1) * (s2 - s1)) hull.pop_back();
            else break;
        }
        hull.push_back(pts[k]);
    }
    // Epsilon test against the best value.
    const double eps = 1e-4;
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < hull.size(); ++k) {
        const std::size_t i = hull[k].second;
        if (k + 1 < hull.size()) {
            const double slope = (rects[hull[k + 1].second].f - rects[i].f) / (hull[k + 1].first - hull[k].first);
            if (rects[i].f - slope * hull[k].first > fmin - eps * std::abs(fmin)) continue;
        }
        out.push_back(i);
    }
    return out;
}

}  // namespace

std::vector<int> Ansatz::reg() const {
    std::vector<int> r(num_reg);
    std::iota(r.begin(), r.end(), 0);
    return r;
}

DynamicCircuit Ansatz::circuit(const std::vector<double> &theta) const {
    if (static_cast<int>(theta.size()) != num_params)
        throw std::invalid_argument("ansatz " + name + ": expected " + std::to_string(num_params) + " parameters, got " +
                                    std::to_string(theta.size()));
    DynamicCircuit c(num_qubits(), 0);
    for (const AnsatzOp &op : ops) {
        switch (op.kind) {
            case AnsatzOp::Kind::Fixed: c.gate(op.gate, op.qubits); break;
            case AnsatzOp::Kind::Rot: c.gate(op.gate, op.qubits, theta[slot_param[op.slot]]); break;
            case AnsatzOp::Kind::Gadget: {
                std::string sub;
                std::vector<int> map;
                for (int q = 0; q < num_reg; ++q) {
                    if (op.axis[q] == 'I') continue;
                    sub += op.axis[q];
                    map.push_back(q);
                }
                map.push_back(num_reg);
                append_pattern(c, gadget_pattern(PauliString(sub), theta[slot_param[op.slot]]), map, true);
                break;
            }
        }
    }
    return c;
}

std::size_t Ansatz::entangling_count() const {
    std::size_t n = 0;
    for (const AnsatzOp &op : ops) {
        if (op.kind == AnsatzOp::Kind::Gadget) n += op.axis.weight();
        else if (is_entangling(op.gate)) ++n;
    }
    return n;
}

Ansatz graph_modified_ansatz(const GraphAnsatzSpec &spec) {
    Ansatz a;
    a.name = "graph(" + std::to_string(spec.M) + "," + std::to_string(spec.N) + ",L=" + std::to_string(spec.layers) + ")";
    a.num_reg = spec.num_qubits;
    a.num_params = spec.num_params();
    const int nv = spec.num_vertex_classes, ne = spec.num_edge_classes;
    for (int q = 0; q < a.num_reg; ++q) a.ops.push_back(fixed(GateType::H, {q}));
    for (int q = 0; q < a.num_reg; ++q) a.ops.push_back(rot(GateType::RY, q, bind(a, spec.vertex_class[q])));
    for (int r = 0; r < spec.rounds(); ++r) {
        const int layer = spec.layer_of_round(r);
        for (std::size_t e = 0; e < spec.edges.size(); ++e) {
            const auto [p, t] = spec.edges[e];
            a.ops.push_back(rot(GateType::RY, t, bind(a, 2 * nv + layer * ne + spec.edge_class[e])));
            a.ops.push_back(fixed(GateType::CZ, {p, t}));
        }
    }
    for (int q = 0; q < a.num_reg; ++q) a.ops.push_back(rot(GateType::RY, q, bind(a, nv + spec.vertex_class[q])));
    for (int q = 0; q < a.num_reg; ++q)
        if (!spec.is_pivot(q)) a.ops.push_back(fixed(GateType::H, {q}));
    a.initial.assign(a.num_params, M_PI);
    return a;
}

DynamicCircuit build_graph_modified_circuit(const GraphAnsatzSpec &spec, const std::vector<double> &theta) {
    return graph_modified_ansatz(spec).circuit(theta);
}

Ansatz gadget_stack_ansatz(int n, int layers, const std::vector<PauliString> &axes) {
    if (n < 1 || layers < 1) throw std::invalid_argument("gadget stack: need n >= 1 and layers >= 1");
    if (static_cast<int>(axes.size()) != layers) throw std::invalid_argument("gadget stack: one axis per layer");
    Ansatz a;
    a.name = "gadget-stack(n=" + std::to_string(n) + ",L=" + std::to_string(layers) + ")";
    a.num_reg = n;
    int p = 0;
    for (int q = 0; q < n; ++q) a.ops.push_back(rot(GateType::RY, q, bind(a, p++)));
    for (int l = 0; l < layers; ++l) {
        gadget_op(a, axes[l], p++);
        if (l + 1 < layers)
            for (int q = 0; q < n; ++q) a.ops.push_back(rot(GateType::RY, q, bind(a, p++)));
    }
    for (int q = 0; q < n; ++q) a.ops.push_back(rot(GateType::RX, q, bind(a, p++)));
    a.num_params = p;
    a.initial.assign(p, 0.1);
    return a;
}

DynamicCircuit build_gadget_ansatz(int n, int layers, const std::vector<PauliString> &axes,
                                   const std::vector<double> &theta) {
    return gadget_stack_ansatz(n, layers, axes).circuit(theta);
}

Ansatz shared_gadget_ansatz(const std::string &name, const PauliString &axis) {
    Ansatz a;
    a.name = name;
    a.num_reg = static_cast<int>(axis.size());
    rotation_layer(a, GateType::RY, a.num_reg, 0);
    gadget_op(a, axis, 1);
    rotation_layer(a, GateType::RY, a.num_reg, 2);
    rotation_layer(a, GateType::RZ, a.num_reg, 3);
    a.num_params = 4;
    a.initial.assign(4, M_PI / 2);
    return a;
}

Ansatz z2_ansatz() {
    Ansatz a = shared_gadget_ansatz("z2", PauliString("XXXX"));
    a.initial = {3.07, 5.56, 1.11, 4.17};
    return a;
}

Ansatz su3_ansatz() {
    Ansatz a = shared_gadget_ansatz("su3", PauliString("XXX"));
    a.initial.assign(4, 3 * M_PI / 2);
    return a;
}

Ansatz lih_ansatz(int layers) {
    Ansatz a = gadget_stack_ansatz(4, layers, std::vector<PauliString>(layers, PauliString("XXXX")));
    a.name = "lih(L=" + std::to_string(layers) + ")";
    return a;
}

OptimizeResult optimize_local(const Objective &f, std::vector<double> x0, int max_iters, double rho_begin,
                              double rho_end) {
    if (max_iters < 1) throw std::invalid_argument("optimize_local: max_iters must be >= 1");
    if (!(rho_begin > 0) || !(rho_end > 0)) throw std::invalid_argument("optimize_local: radii must be positive");
    Recorder rec(f);
    local_search(rec, std::move(x0), max_iters, rho_begin, rho_end);
    return finish(std::move(rec.trace));
}

OptimizeResult optimize_direct(const Objective &f, const std::vector<double> &lower, const std::vector<double> &upper,
                               int global_iters, int local_iters) {
    const std::size_t d = lower.size();
    if (d == 0 || upper.size() != d) throw std::invalid_argument("optimize_direct: bounds size mismatch");
    for (std::size_t i = 0; i < d; ++i)
        if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(upper[i] > lower[i]))
            throw std::invalid_argument("optimize_direct: invalid bounds in dimension " + std::to_string(i));
    if (global_iters < 0 || local_iters < 0) throw std::invalid_argument("optimize_direct: negative budget");

    Recorder rec(f);
    auto to_box = [&](const std::vector<double> &u) {
        std::vector<double> x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = lower[i] + u[i] * (upper[i] - lower[i]);
        return x;
    };
    std::vector<Rect> rects;
    rects.push_back({std::vector<double>(d, 0.5), std::vector<int>(d, 0), 0.0});
    rects[0].f = rec(to_box(rects[0].center));
    double fmin = rects[0].f;

    for (int it = 0; it < global_iters; ++it) {
        const std::vector<std::size_t> po = potentially_optimal(rects, fmin);
        for (std::size_t i : po) {
            const Rect parent = rects[i];
            const int kmin = *std::min_element(parent.level.begin(), parent.level.end());
            const double delta = std::pow(3.0, -(kmin + 1));
            struct Probe {
                std::size_t dim;
                Rect lo, hi;
                double w;
            };
            std::vector<Probe> probes;
            for (std::size_t k = 0; k < d; ++k) {
                if (parent.level[k] != kmin) continue;
                Probe p{k, parent, parent, 0.0};
                p.lo.center[k] -= delta;
                p.hi.center[k] += delta;
                p.lo.f = rec(to_box(p.lo.center));
                p.hi.f = rec(to_box(p.hi.center));
                p.w = std::min(p.lo.f, p.hi.f);
                fmin = std::min(fmin, p.w);
                probes.push_back(std::move(p));
            }
            std::stable_sort(probes.begin(), probes.end(), [](const Probe &a, const Probe &b) { return a.w < b.w; });
            // Best direction keeps the biggest pieces.
            Rect center = parent;
            for (std::size_t a = 0; a < probes.size(); ++a) {
                center.level[probes[a].dim]++;
                for (Rect *r : {&probes[a].lo, &probes[a].hi}) {
                    r->level = center.level;
                    rects.push_back(*r);
                }
            }
            rects[i] = center;
        }
    }
    std::vector<TracePoint> global = rec.trace;
    const auto best = std::min_element(global.begin(), global.end(),
                                       [](const TracePoint &a, const TracePoint &b) { return a.energy < b.energy; });
    double span = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d; ++i) span = std::min(span, upper[i] - lower[i]);
    local_search(rec, best->theta, local_iters, 0.1 * span, 1e-6);
    return finish(std::move(rec.trace));
}

void OptimizerConfig::validate() const {
    if (max_iters < 1) throw std::invalid_argument("optimizer: max_iters must be >= 1");
    if (global_iters < 0) throw std::invalid_argument("optimizer: global_iters must be >= 0");
    if (lower.size() != upper.size()) throw std::invalid_argument("optimizer: bounds size mismatch");
    for (std::size_t i = 0; i < lower.size(); ++i)
        if (!(upper[i] > lower[i])) throw std::invalid_argument("optimizer: empty bound interval");
    if (!(rho_begin > 0)) throw std::invalid_argument("optimizer: rho_begin must be positive");
}

double circuit_fidelity(const DynamicCircuit &c, const std::vector<int> &reg, const QuantumState &target) {
    double f = 0.0;
    for (const Branch &b : enumerate_branches(c)) f += b.probability * reduced_fidelity(b.state, reg, target);
    return std::clamp(f, 0.0, 1.0);
}

VQERunRecord run_vqe(const Hamiltonian &h, const Ansatz &ansatz, const VqeOptions &opt, const Spectrum *reference,
                     double gap_override) {
    opt.optimizer.validate();
    if (opt.shots < 0) throw std::invalid_argument("vqe: negative shot count");
    if (static_cast<int>(h.num_qubits()) != ansatz.num_reg)
        throw std::invalid_argument("vqe: Hamiltonian acts on " + std::to_string(h.num_qubits()) +
                                    " qubits, ansatz register has " + std::to_string(ansatz.num_reg));
    const std::vector<int> reg = ansatz.reg();

    CalibrationMatrix cal;
    EstimateOptions eopt;
    eopt.reg = reg;
    if (opt.shots > 0 && opt.mitigation.readout) {
        Rng crng(derive_seed(opt.seed, 0xCA1));
        cal = build_calibration_matrix(ansatz.num_reg, opt.noise, opt.mitigation.calibration_shots, crng, reg);
        eopt.calibration = &cal;
    }
    std::uint64_t calls = 0;
    Objective f = [&](const std::vector<double> &theta) -> std::pair<double, double> {
        const DynamicCircuit c = ansatz.circuit(theta);
        if (opt.shots == 0) return {exact_energy(h, c, reg), 0.0};
        Rng rng(derive_seed(opt.seed, calls++));
        const EstimateResult r = estimate_energy(h, c, opt.shots, opt.noise, opt.mitigation, rng, eopt);
        return {r.mean, std::sqrt(std::max(0.0, r.variance))};
    };

    const OptimizerConfig &oc = opt.optimizer;
    std::vector<double> x0 = oc.initial.empty() ? ansatz.initial : oc.initial;
    if (static_cast<int>(x0.size()) != ansatz.num_params)
        throw std::invalid_argument("vqe: initial point has " + std::to_string(x0.size()) + " entries, ansatz needs " +
                                    std::to_string(ansatz.num_params));
    OptimizeResult res;
    if (oc.method == OptimizerConfig::Method::Local) {
        res = optimize_local(f, x0, oc.max_iters, oc.rho_begin);
    } else {
        std::vector<double> lo = oc.lower, hi = oc.upper;
        if (lo.empty()) lo.assign(ansatz.num_params, 0.0), hi.assign(ansatz.num_params, kTwoPi);
        if (static_cast<int>(lo.size()) != ansatz.num_params) throw std::invalid_argument("vqe: bounds size mismatch");
        res = optimize_direct(f, lo, hi, oc.global_iters, oc.max_iters);
    }

    const Spectrum spec = reference ? *reference : exact_diagonalize(h, 3);
    VQERunRecord r;
    r.trace = std::move(res.trace);
    r.theta_opt = res.theta;
    r.e_opt = res.value;
    r.sigma_opt = 0.0;
    for (const TracePoint &t : r.trace)
        if (t.energy == r.e_opt) r.sigma_opt = t.sigma;
    const DynamicCircuit best = ansatz.circuit(r.theta_opt);
    r.e_exact_opt = exact_energy(h, best, reg);
    r.fidelity = circuit_fidelity(best, reg, spec.ground);
    r.e0 = spec.e0;
    r.e1 = spec.e1;
    r.e2 = spec.e2;
    r.gap = gap_override > 0 ? gap_override : spec.gap;
    r.rel_err = std::abs(r.e_opt - r.e0) / r.gap;
    r.seed = opt.seed;
    r.ansatz = ansatz.name;
    return r;
}

std::string to_json(const VQERunRecord &r) {
    nlohmann::json j;
    j["config"] = {{"ansatz", r.ansatz}, {"seed", r.seed}};
    nlohmann::json energies = nlohmann::json::array(), sigmas = nlohmann::json::array(),
                   best = nlohmann::json::array(), thetas = nlohmann::json::array();
    for (const TracePoint &t : r.trace) {
        energies.push_back(t.energy);
        sigmas.push_back(t.sigma);
        best.push_back(t.best);
        thetas.push_back(t.theta);
    }
    j["trace"] = {{"energy", energies}, {"sigma", sigmas}, {"best", best}, {"theta", thetas}};
    j["summary"] = {{"E_opt", r.e_opt},   {"E_exact_opt", r.e_exact_opt}, {"sigma", r.sigma_opt},
                    {"theta_opt", r.theta_opt}, {"fidelity", r.fidelity},   {"E0", r.e0},
                    {"E1", r.e1},         {"E2", r.e2},                   {"gap", r.gap},
                    {"rel_err", r.rel_err}, {"iters", r.trace.size()}};
    return j.dump(2);
}

double entanglement_of_formation(const QuantumState &s) {
    if (s.num_qubits() != 2) throw std::invalid_argument("entanglement_of_formation: need a two-qubit state");
    const auto &a = s.amplitudes();
    const double c = std::min(1.0, 2 * std::abs(a[0] * a[3] - a[1] * a[2]) / std::max(s.norm() * s.norm(), 1e-300));
    const double x = (1 + std::sqrt(std::max(0.0, 1 - c * c))) / 2;
    auto h2 = [](double p) { return p <= 0 || p >= 1 ? 0.0 : -p * std::log2(p) - (1 - p) * std::log2(1 - p); };
    return h2(x);
}

}  // namespace mbvqe
