#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mbvqe/estimation.hpp"
#include "mbvqe/models.hpp"
#include "mbvqe/pauli.hpp"
#include "mbvqe/statevector.hpp"

namespace mbvqe {

// One step of an ansatz. Rot and Gadget steps own a slot whose angle is
// parameter slot_param[slot].
struct AnsatzOp {
    enum class Kind { Fixed, Rot, Gadget };
    Kind kind = Kind::Fixed;
    GateType gate = GateType::H;  // Fixed, Rot
    std::vector<int> qubits;
    int slot = -1;
    PauliString axis;  // Gadget, on the register
};

class Ansatz {
public:
    std::string name;
    int num_reg = 0;  // register qubits 0..num_reg-1; an ancilla, if any, is num_reg
    bool ancilla = false;
    std::vector<AnsatzOp> ops;
    std::vector<int> slot_param;
    int num_params = 0;
    std::vector<double> initial;  // default starting point

    int num_slots() const { return static_cast<int>(slot_param.size()); }
    int num_qubits() const { return num_reg + (ancilla ? 1 : 0); }
    std::vector<int> reg() const;

    // Throws std::invalid_argument on a length mismatch.
    DynamicCircuit circuit(const std::vector<double> &theta) const;
    // Number of CZ/CX gates the circuit will contain.
    std::size_t entangling_count() const;
};

// H on all, RY(alpha), 2L-1 rounds of RY(theta)-CZ per edge, RY(beta), H on
// non-pivots. alpha = beta = theta = 0 prepares the unperturbed ground state.
Ansatz graph_modified_ansatz(const GraphAnsatzSpec &spec);
DynamicCircuit build_graph_modified_circuit(const GraphAnsatzSpec &spec, const std::vector<double> &theta);

// RY layer, then per layer a gadget and (except after the last) an RY
// layer, then an RX layer; 5L+4 free parameters for four qubits. One
// ancilla is reset and reused by every gadget.
Ansatz gadget_stack_ansatz(int n, int layers, const std::vector<PauliString> &axes);
DynamicCircuit build_gadget_ansatz(int n, int layers, const std::vector<PauliString> &axes, const std::vector<double> &theta);

// Single gadget between a shared RY layer and shared RY, RZ layers:
// parameters (ry_before, gadget, ry_after, rz_after).
Ansatz shared_gadget_ansatz(const std::string &name, const PauliString &axis);
Ansatz z2_ansatz();   // X on all four qubits
Ansatz su3_ansatz();  // X on all three qubits
Ansatz lih_ansatz(int layers);

struct TracePoint {
    std::vector<double> theta;
    double energy = 0.0;
    double sigma = 0.0;
    double best = 0.0;  // best energy so far
};

struct OptimizeResult {
    std::vector<double> theta;
    double value = 0.0;
    std::vector<TracePoint> trace;
};

// Returns (value, sigma). A NaN value aborts the optimizer.
using Objective = std::function<std::pair<double, double>(const std::vector<double> &)>;

// Derivative-free trust region on linear interpolation models over a
// simplex: one evaluation per iteration, radius halves when a step fails.
OptimizeResult optimize_local(const Objective &f, std::vector<double> x0, int max_iters, double rho_begin = 0.5,
                              double rho_end = 1e-6);

// Dividing rectangles on the box for global_iters iterations, then
// optimize_local from the best point for local_iters evaluations.
OptimizeResult optimize_direct(const Objective &f, const std::vector<double> &lower, const std::vector<double> &upper,
                               int global_iters, int local_iters);

struct OptimizerConfig {
    enum class Method { Local, Direct };
    Method method = Method::Local;
    int max_iters = 100;   // local evaluations
    int global_iters = 0;  // DIRECT iterations
    std::vector<double> initial;  // empty: the ansatz default
    std::vector<double> lower, upper;  // empty: [0, 2 pi]
    double rho_begin = 0.5;

    void validate() const;
};

struct VqeOptions {
    long shots = 0;  // 0: exact expectation
    NoiseModel noise;
    MitigationConfig mitigation;
    std::uint64_t seed = 0;
    OptimizerConfig optimizer;
};

struct VQERunRecord {
    std::vector<TracePoint> trace;
    std::vector<double> theta_opt;
    double e_opt = 0.0;        // lowest recorded energy
    double e_exact_opt = 0.0;  // noiseless energy at theta_opt
    double sigma_opt = 0.0;
    double fidelity = 0.0;
    double e0 = 0.0, e1 = 0.0, e2 = 0.0, gap = 0.0;
    double rel_err = 0.0;  // |e_opt - e0| / gap
    std::uint64_t seed = 0;
    std::string ansatz;
};

// Branch-weighted fidelity of the register with `target`.
double circuit_fidelity(const DynamicCircuit &c, const std::vector<int> &reg, const QuantumState &target);

// `reference` may carry a precomputed spectrum; `gap_override` > 0 replaces
// e1 - e0 as the error normalisation.
VQERunRecord run_vqe(const Hamiltonian &h, const Ansatz &ansatz, const VqeOptions &opt,
                     const Spectrum *reference = nullptr, double gap_override = 0.0);

std::string to_json(const VQERunRecord &r);

// Concurrence-based entanglement of formation of a two-qubit pure state.
double entanglement_of_formation(const QuantumState &s);

}  // namespace mbvqe
