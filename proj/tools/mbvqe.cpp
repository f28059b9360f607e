#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mbvqe/models.hpp"
#include "mbvqe/pattern.hpp"
#include "mbvqe/vqe.hpp"

using namespace mbvqe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kFailed = 1, kConfig = 2, kVerify = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_atomic(const fs::path &path, const std::string &text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Model plus the knobs a sweep may vary.
struct ModelSpec {
    std::string name;
    double lambda = 1.0, mass = 0.0, x = 0.8, xi = 0.0;
    int m = 2, n = 1, layers = 1;

    Hamiltonian hamiltonian() const {
        if (name == "z2") return z2_hamiltonian(lambda);
        if (name == "su3") return su3_hamiltonian(mass, x);
        if (name == "pc") return planar_code_hamiltonian(m, n, xi);
        if (name == "lih") return lih_hamiltonian();
        throw ConfigError("unknown model '" + name + "' (expected z2, su3, pc or lih)");
    }
    void set(const std::string &key, double v) {
        if (key == "lambda") lambda = v;
        else if (key == "mass") mass = v;
        else if (key == "x") x = v;
        else if (key == "xi") xi = v;
        else throw ConfigError("model " + name + " has no parameter '" + key + "'");
    }
    std::vector<std::pair<std::string, Hamiltonian>> observables() const {
        if (name == "z2") {
            Hamiltonian tri(4, {});
            for (int q = 0; q < 4; ++q) tri = tri + Hamiltonian(4, {{0.25, PauliString::single(4, q, 'Z')}});
            return {{"plaquette", Hamiltonian(4, {{1.0, PauliString("XXXX")}})}, {"triangle", tri}};
        }
        if (name == "su3") return {{"N", su3_number()}, {"N_prime", su3_number_prime()}};
        return {};
    }
};

ModelSpec model_from_json(const json &j) {
    if (!j.is_object() || !j.contains("name")) throw ConfigError("model: object with a 'name' field required");
    ModelSpec s;
    s.name = j.at("name").get<std::string>();
    s.lambda = j.value("lambda", s.lambda);
    s.mass = j.value("mass", s.mass);
    s.x = j.value("x", s.x);
    s.xi = j.value("xi", s.xi);
    s.m = j.value("m", s.m);
    s.n = j.value("n", s.n);
    s.layers = j.value("layers", s.layers);
    s.hamiltonian();  // rejects unknown names early
    return s;
}

Ansatz default_ansatz(const ModelSpec &s) {
    if (s.name == "z2") return z2_ansatz();
    if (s.name == "su3") return su3_ansatz();
    if (s.name == "pc") return graph_modified_ansatz(pc_graph_ansatz(s.m, s.n, s.layers));
    return lih_ansatz(s.layers);
}

Ansatz ansatz_from_json(const json &j, const ModelSpec &s) {
    if (j.is_null() || j.value("kind", std::string("default")) == "default") return default_ansatz(s);
    const std::string kind = j.at("kind");
    if (kind == "gadget-stack") {
        std::vector<PauliString> axes;
        for (const auto &a : j.at("axes")) axes.emplace_back(a.get<std::string>());
        const int n = static_cast<int>(s.hamiltonian().num_qubits());
        return gadget_stack_ansatz(n, static_cast<int>(axes.size()), axes);
    }
    if (kind == "graph") return graph_modified_ansatz(pc_graph_ansatz(s.m, s.n, j.value("layers", s.layers)));
    throw ConfigError("ansatz: unknown kind '" + kind + "'");
}

OptimizerConfig optimizer_from_json(const json &j, const ModelSpec &s) {
    OptimizerConfig o;
    if (s.name == "pc") {
        o.method = OptimizerConfig::Method::Direct;
        o.global_iters = 50;
        o.max_iters = 50;
    } else if (s.name == "lih") {
        o.max_iters = 250;
    }
    if (j.is_null()) return o;
    const std::string method = j.value("method", o.method == OptimizerConfig::Method::Direct ? "direct" : "local");
    if (method == "local") o.method = OptimizerConfig::Method::Local;
    else if (method == "direct") o.method = OptimizerConfig::Method::Direct;
    else throw ConfigError("optimizer: method must be 'local' or 'direct'");
    o.max_iters = j.value("max_iters", o.max_iters);
    o.global_iters = j.value("global_iters", o.global_iters);
    o.initial = j.value("initial", o.initial);
    o.lower = j.value("lower", o.lower);
    o.upper = j.value("upper", o.upper);
    o.rho_begin = j.value("rho_begin", o.rho_begin);
    return o;
}

NoiseModel noise_from_json(const json &j) {
    NoiseModel nm;
    if (j.is_null()) return nm;
    nm.two_qubit_depolarizing = j.value("depolarizing", 0.0);
    if (j.contains("readout")) {
        const json &r = j.at("readout");
        if (r.is_array() && r.size() == 2 && r[0].is_number()) {
            nm.readout_all = {r[0].get<double>(), r[1].get<double>()};
        } else if (r.is_object()) {
            for (const auto &[k, v] : r.items()) nm.readout[std::stoi(k)] = {v.at(0).get<double>(), v.at(1).get<double>()};
        } else {
            throw ConfigError("noise.readout: [p1_given0, p0_given1] or {qubit: [...]}");
        }
    }
    nm.validate();
    return nm;
}

MitigationConfig mitigation_from_json(const json &j) {
    MitigationConfig m;
    if (j.is_null()) return m;
    m.readout = j.value("readout", false);
    m.calibration_shots = j.value("calibration_shots", m.calibration_shots);
    m.self_mitigation = j.value("self", false);
    m.kappa = j.value("kappa", m.kappa);
    m.twirl = j.value("twirl", false);
    m.twirl_seed = j.value("twirl_seed", m.twirl_seed);
    m.validate();
    return m;
}

struct Experiment {
    ModelSpec model;
    json ansatz;
    std::string sweep_param;
    std::vector<double> grid;
    VqeOptions base;
    std::string output = "mbvqe_out";
    int workers = 1;
};

std::uint64_t env_seed() {
    const char *s = std::getenv("MBVQE_SEED");
    if (!s || !*s) return 0;
    try {
        return std::stoull(s);
    } catch (const std::exception &) {
        throw ConfigError(std::string("MBVQE_SEED is not an unsigned integer: ") + s);
    }
}

Experiment experiment_from_json(const json &j, bool sweep) {
    Experiment e;
    e.model = model_from_json(j.value("model", json()));
    e.ansatz = j.value("ansatz", json());
    if (sweep) {
        const json &s = j.value("sweep", json());
        if (!s.is_object()) throw ConfigError("sweep: object with 'param' and 'values' required");
        e.sweep_param = s.value("param", std::string());
        e.grid = s.value("values", std::vector<double>{});
        if (e.grid.empty()) throw ConfigError("sweep: grid is empty");
        e.model.set(e.sweep_param, e.grid.front());
    }
    e.base.shots = j.value("shots", 0L);
    e.base.noise = noise_from_json(j.value("noise", json()));
    e.base.mitigation = mitigation_from_json(j.value("mitigation", json()));
    e.base.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : env_seed();
    e.base.optimizer = optimizer_from_json(j.value("optimizer", json()), e.model);
    e.base.optimizer.validate();
    e.output = j.value("output", e.output);
    e.workers = j.value("workers", 1);
    if (e.workers < 1) throw ConfigError("workers must be >= 1");
    return e;
}

json read_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception &ex) {
        throw ConfigError(path + ": " + ex.what());
    }
}

struct PointResult {
    VQERunRecord record;
    std::vector<std::pair<std::string, double>> observables;
};

PointResult run_point(const ModelSpec &model, const json &ansatz_cfg, VqeOptions opt) {
    const Hamiltonian h = model.hamiltonian();
    const Ansatz a = ansatz_from_json(ansatz_cfg, model);
    PointResult p{run_vqe(h, a, opt), {}};
    const DynamicCircuit best = a.circuit(p.record.theta_opt);
    for (const auto &[name, obs] : model.observables()) p.observables.push_back({name, exact_energy(obs, best, a.reg())});
    return p;
}

std::string csv_header(const ModelSpec &m) {
    std::string s = "param,E_vqe,sigma,E0,E1,E2,rel_err,fidelity,iters,seed";
    for (const auto &[name, obs] : m.observables()) s += "," + name;
    return s + "\n";
}

std::string csv_row(double param, const PointResult &p) {
    const VQERunRecord &r = p.record;
    std::string s = fmt(param) + "," + fmt(r.e_opt) + "," + fmt(r.sigma_opt) + "," + fmt(r.e0) + "," + fmt(r.e1) + "," +
                    fmt(r.e2) + "," + fmt(r.rel_err) + "," + fmt(r.fidelity) + "," + std::to_string(r.trace.size()) +
                    "," + std::to_string(r.seed);
    for (const auto &[name, v] : p.observables) s += "," + fmt(v);
    return s + "\n";
}

std::string record_json(const PointResult &p, const json &extra) {
    json j = json::parse(to_json(p.record));
    for (const auto &[k, v] : extra.items()) j["config"][k] = v;
    for (const auto &[name, v] : p.observables) j["summary"]["observables"][name] = v;
    return j.dump(2) + "\n";
}

int cmd_model(const std::string &name, const std::map<std::string, double> &params, int levels, bool list_terms) {
    ModelSpec s;
    s.name = name;
    if (params.count("m")) s.m = static_cast<int>(params.at("m"));
    if (params.count("n")) s.n = static_cast<int>(params.at("n"));
    for (const auto &[k, v] : params)
        if (k != "m" && k != "n") s.set(k, v);
    const Hamiltonian h = s.hamiltonian();
    const Spectrum sp = exact_diagonalize(h, levels);
    json j;
    j["model"] = name;
    j["num_qubits"] = h.num_qubits();
    j["num_terms"] = h.terms().size();
    if (list_terms) {
        json terms = json::array();
        for (const PauliTerm &t : h.terms()) terms.push_back({{"coeff", t.coeff}, {"pauli", t.string.str()}});
        j["terms"] = terms;
    }
    j["E0"] = sp.e0;
    j["E1"] = sp.e1;
    j["E2"] = sp.e2;
    j["Eg"] = sp.gap;
    for (const auto &[oname, obs] : s.observables()) j["observables"][oname] = sp.ground.expectation(obs);
    std::cout << j.dump(2) << "\n";
    return kOk;
}

void print_pattern(const Pattern &p, const std::vector<Gate> &prefix) {
    std::cout << to_text(p);
    std::cout << "# prefix:";
    for (const Gate &g : prefix) {
        std::cout << " " << gate_name(g.type) << "(";
        for (std::size_t i = 0; i < g.qubits.size(); ++i) std::cout << (i ? "," : "") << g.qubits[i] + 1;
        std::cout << ")";
    }
    std::cout << "\n# circuit\n" << compile_to_circuit(p).to_text();
}

// Worst overlap over random inputs and every measurement branch.
double verify_gadget(const PauliString &axis, double theta, Rng &rng) {
    const int n = static_cast<int>(axis.size());
    const DynamicCircuit c = compile_to_circuit(gadget_pattern(axis, theta));
    std::vector<int> reg(n);
    std::iota(reg.begin(), reg.end(), 0);
    double worst = 1.0;
    for (int k = 0; k < 8; ++k) {
        const QuantumState in = QuantumState::random(n, rng);
        QuantumState want = in, p = in;
        p.apply_pauli(axis);
        for (std::size_t i = 0; i < want.amplitudes().size(); ++i)
            want.amplitudes()[i] = std::cos(theta / 2) * in.amplitude(i) - cdouble(0, 1) * std::sin(theta / 2) * p.amplitude(i);
        const QuantumState full = in.tensor(QuantumState(1));
        for (const Branch &b : enumerate_branches(c, &full))
            worst = std::min(worst, reduced_fidelity(b.state, reg, want));
    }
    return worst;
}

double verify_reduction(const Pattern &orig, const Pattern &red, Rng &rng) {
    double worst = 1.0;
    const int n_in = static_cast<int>(orig.inputs.size());
    for (int k = 0; k < 8; ++k) {
        const QuantumState in = QuantumState::random(n_in, rng);
        worst = std::min(worst, fidelity(simulate_pattern(orig, in, rng), simulate_pattern(red, in, rng)));
    }
    return worst;
}

int report_verify(double worst) {
    const bool ok = worst >= 1 - 1e-10;
    std::cout << "# verify: " << (ok ? "PASS" : "FAIL") << " (worst fidelity " << fmt(worst) << ")\n";
    return ok ? kOk : kVerify;
}

int cmd_pattern_gadget(int n, const std::string &axis_text, double theta, bool verify, std::uint64_t seed) {
    const std::string axis_str = axis_text.empty() ? std::string(n, 'Z') : axis_text;
    if (static_cast<int>(axis_str.size()) != n) throw ConfigError("--axis must have length --n");
    const PauliString axis(axis_str);
    const Pattern p = gadget_pattern(axis, theta);
    print_pattern(p, clifford_prefix(p));
    if (!verify) return kOk;
    if (n + 1 > 10) throw ConfigError("--verify is limited to 10 qubits");
    Rng rng(seed);
    return report_verify(verify_gadget(axis, theta, rng));
}

int cmd_pattern_reduce(const std::string &file, const std::map<std::string, double> &params, bool verify,
                       std::uint64_t seed) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open " + file);
    Pattern p;
    try {
        p = parse_pattern(in, params);
    } catch (const std::invalid_argument &e) {
        throw ConfigError(file + ": " + e.what());
    }
    const Reduction r = reduce(p);
    std::cout << "# " << p.num_qubits << " -> " << r.pattern.num_qubits << " qubits\n";
    print_pattern(r.pattern, r.prefix);
    if (!verify) return kOk;
    if (r.pattern.num_qubits > 10) throw ConfigError("--verify is limited to 10 qubits");
    Rng rng(seed);
    return report_verify(verify_reduction(p, r.pattern, rng));
}

int cmd_vqe(const std::string &config, const std::optional<std::uint64_t> &seed, const std::string &output) {
    Experiment e = experiment_from_json(read_json_file(config), false);
    if (seed) e.base.seed = *seed;
    if (!output.empty()) e.output = output;
    const PointResult p = run_point(e.model, e.ansatz, e.base);
    write_atomic(fs::path(e.output) / "record.json", record_json(p, {{"model", e.model.name}}));
    const std::string csv = csv_header(e.model) + csv_row(0.0, p);
    write_atomic(fs::path(e.output) / "summary.csv", csv);
    std::cout << csv;
    return kOk;
}

int cmd_sweep(const std::string &config, const std::optional<std::uint64_t> &seed, const std::string &output,
              int workers) {
    Experiment e = experiment_from_json(read_json_file(config), true);
    if (seed) e.base.seed = *seed;
    if (!output.empty()) e.output = output;
    if (workers > 0) e.workers = workers;

    const std::size_t n = e.grid.size();
    std::vector<std::optional<PointResult>> results(n);
    std::vector<std::string> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                ModelSpec m = e.model;
                m.set(e.sweep_param, e.grid[i]);
                VqeOptions o = e.base;
                o.seed = derive_seed(e.base.seed, i);
                PointResult p = run_point(m, e.ansatz, o);
                write_atomic(fs::path(e.output) / ("point_" + std::to_string(i) + ".json"),
                             record_json(p, {{"model", m.name}, {e.sweep_param, e.grid[i]}}));
                results[i] = std::move(p);
            } catch (const std::exception &ex) {
                errors[i] = ex.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min<int>(e.workers, static_cast<int>(n)); ++t) pool.emplace_back(work);
    for (auto &t : pool) t.join();

    std::string csv = csv_header(e.model);
    int failures = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (results[i]) csv += csv_row(e.grid[i], *results[i]);
        else {
            ++failures;
            std::cerr << "point " << i << " (" << e.sweep_param << "=" << e.grid[i] << "): " << errors[i] << "\n";
        }
    }
    write_atomic(fs::path(e.output) / "summary.csv", csv);
    std::cout << csv;
    return failures ? kFailed : kOk;
}

int cmd_selftest() {
    int bad = 0;
    auto check = [&](const char *name, bool ok) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        bad += !ok;
    };
    Rng rng(derive_seed(env_seed(), 1));
    double worst = 1.0;
    for (const char *axis : {"Z", "XY", "ZZZ", "XYZX"}) worst = std::min(worst, verify_gadget(PauliString(axis), 0.73, rng));
    check("gadget equals Pauli rotation", worst >= 1 - 1e-10);
    check("z2 closed form", std::abs(exact_diagonalize(z2_hamiltonian(2.0), 2).e0 + std::sqrt(8.0)) < 1e-10);
    check("planar code 2x1 unperturbed energy", std::abs(exact_diagonalize(planar_code_hamiltonian(2, 1, 0.0), 2).e0 + 8) < 1e-9);
    check("lih term count", lih_hamiltonian().terms().size() == 100);
    const Ansatz g = graph_modified_ansatz(pc_graph_ansatz(2, 1, 1));
    const Spectrum sp = exact_diagonalize(planar_code_hamiltonian(2, 1, 0.0), 2);
    check("graph ansatz at zero", circuit_fidelity(g.circuit(std::vector<double>(g.num_params, 0.0)), g.reg(), sp.ground) >
                                       1 - 1e-9);
    return bad ? kVerify : kOk;
}

std::map<std::string, double> parse_params(const std::vector<std::string> &items) {
    std::map<std::string, double> out;
    for (const std::string &s : items) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--param expects name=value, got '" + s + "'");
        try {
            out[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
        } catch (const std::exception &) {
            throw ConfigError("--param: bad number in '" + s + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Measurement-based VQE toolkit"};
    app.require_subcommand(1);

    auto *model = app.add_subcommand("model", "Print terms and low spectrum of a model");
    std::string model_name;
    std::optional<double> lambda, mass, x, xi;
    std::optional<int> m, n;
    int levels = 3;
    bool terms = false;
    model->add_option("name", model_name, "z2, su3, pc or lih")->required();
    model->add_option("--lambda", lambda);
    model->add_option("--mass", mass);
    model->add_option("--x", x);
    model->add_option("--xi", xi);
    model->add_option("--m", m);
    model->add_option("--n", n);
    model->add_option("--levels", levels)->check(CLI::Range(1, 16));
    model->add_flag("--terms", terms, "List every Pauli term");

    auto *pattern = app.add_subcommand("pattern", "Build, reduce and compile measurement patterns");
    pattern->require_subcommand(1);
    auto *gadget = pattern->add_subcommand("gadget", "Pauli-rotation gadget");
    int gn = 1;
    std::string axis;
    double theta = 0.3;
    bool verify = false;
    gadget->add_option("--n", gn)->check(CLI::Range(1, 16));
    gadget->add_option("--axis", axis);
    gadget->add_option("--theta", theta);
    gadget->add_flag("--verify", verify);
    auto *reduce_cmd = pattern->add_subcommand("reduce", "Remove Pauli-measured qubits from a pattern file");
    std::string pat_file;
    std::vector<std::string> pat_params;
    reduce_cmd->add_option("file", pat_file)->required();
    reduce_cmd->add_option("--param", pat_params, "name=value for symbolic angles");
    reduce_cmd->add_flag("--verify", verify);

    std::string config, output;
    std::optional<std::uint64_t> seed;
    int workers = 0;
    auto *vqe = app.add_subcommand("vqe", "Run one VQE from a JSON config");
    vqe->add_option("config", config)->required();
    vqe->add_option("--seed", seed);
    vqe->add_option("--output", output);
    auto *sweep = app.add_subcommand("sweep", "Run a parameter sweep from a JSON config");
    sweep->add_option("config", config)->required();
    sweep->add_option("--seed", seed);
    sweep->add_option("--output", output);
    sweep->add_option("--workers", workers);
    auto *selftest = app.add_subcommand("selftest", "Quick internal consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*model) {
            std::map<std::string, double> p;
            if (lambda) p["lambda"] = *lambda;
            if (mass) p["mass"] = *mass;
            if (x) p["x"] = *x;
            if (xi) p["xi"] = *xi;
            if (m) p["m"] = *m;
            if (n) p["n"] = *n;
            return cmd_model(model_name, p, levels, terms || model_name == "lih");
        }
        if (*gadget) return cmd_pattern_gadget(gn, axis, theta, verify, seed.value_or(env_seed()));
        if (*reduce_cmd) return cmd_pattern_reduce(pat_file, parse_params(pat_params), verify, seed.value_or(env_seed()));
        if (*vqe) return cmd_vqe(config, seed, output);
        if (*sweep) return cmd_sweep(config, seed, output, workers);
        if (*selftest) return cmd_selftest();
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::invalid_argument &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailed;
    }
    return kOk;
}
