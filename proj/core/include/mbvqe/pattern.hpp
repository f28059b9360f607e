#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mbvqe/pauli.hpp"
#include "mbvqe/statevector.hpp"

namespace mbvqe {

// Parity sets of measurement outcomes; a qubit listed twice cancels.
using DepSet = std::vector<int>;

void toggle(DepSet &d, int q);
void toggle_all(DepSet &d, const DepSet &other);

struct Measurement {
    // R(angle): outcome 0 projects onto (|0> + e^{i angle}|1>)/sqrt2.
    // X is R(0), Y is R(pi/2).
    enum class Basis { X, Y, Z, R };
    Basis basis = Basis::X;
    double angle = 0.0;
    DepSet sign_deps;    // angle -> -angle on odd parity
    DepSet flip_deps;    // outcome label flipped (angle + pi) on odd parity
    bool flip = false;   // constant flip, Pauli bases only

    bool is_pauli() const { return basis != Basis::R; }
};

char basis_char(Measurement::Basis b);

struct Byproduct {
    DepSet x_deps, z_deps;
    bool x_const = false, z_const = false;
    bool empty() const { return x_deps.empty() && z_deps.empty() && !x_const && !z_const; }
};

// Execution model: inputs carry the input state, all other qubits start in
// |+>. Then pre_cliffords (inputs only), CZ on every edge, local_cliffords,
// measurements in `order`, and finally byproducts on outputs. Clifford
// words are time-ordered over {H, S}.
struct Pattern {
    int num_qubits = 0;
    std::vector<int> inputs, outputs;
    std::vector<std::pair<int, int>> edges;
    std::map<int, std::string> pre_cliffords;
    std::map<int, std::string> local_cliffords;
    std::map<int, Measurement> measurements;
    std::map<int, Byproduct> byproducts;
    std::vector<int> order;

    bool is_output(int q) const;
    bool is_input(int q) const;
    std::vector<std::vector<int>> neighbours() const;
    std::size_t entangling_count() const { return edges.size(); }

    // Throws std::invalid_argument describing the first violation found.
    void validate() const;
};

// exp(-i theta/2 P) on n = |axis| body qubits plus one ancilla (index n).
Pattern gadget_pattern(const PauliString &axis, double theta);

// Gate-model reference: basis change, CX ladder, RZ, ladder back.
DynamicCircuit gate_gadget_circuit(const PauliString &axis, double theta);

Pattern identity_pattern(int n);
Pattern cz_pattern();
// J(alpha) = H diag(1, e^{i alpha}); input 0, output 1.
Pattern j_pattern(double alpha);

Pattern tensor(const Pattern &a, const Pattern &b);
// Runs a, then b, with b's inputs wired to a's outputs. The Clifford between
// them (a's output LC then b's input LC) must be diagonal.
Pattern concatenate(const Pattern &a, const Pattern &b);

// Fills byproducts, adaptive dependencies and order from a generalized flow.
// Requires XY-plane measurements and no local Cliffords.
void derive_corrections(Pattern &p);

struct Reduction {
    Pattern pattern;
    std::vector<Gate> prefix;  // CZ and LC gates after |+> preparation
    int eliminated = 0;
};

// Removes every Pauli-measured qubit by stabilizer simulation (random
// outcomes forced to 0). Dependencies on removed qubits are rewritten in
// terms of the remaining ones. Pauli-measured inputs are kept when removing
// them would leave no qubit to carry the input. With plus_inputs the inputs are fixed to |+>
// and the result has no inputs.
Reduction reduce(const Pattern &p, bool plus_inputs = false);

std::vector<Gate> clifford_prefix(const Pattern &p);

// Appends p to c with pattern qubit q placed on circuit qubit map[q]. Non-input
// qubits are reset first when reset_fresh is set, otherwise assumed |0>.
// Returns the cbit assigned to each measured qubit (keyed by pattern qubit).
std::map<int, int> append_pattern(DynamicCircuit &c, const Pattern &p, const std::vector<int> &map, bool reset_fresh);

// Circuit on p.num_qubits qubits; Pauli measurements are only accepted on inputs.
DynamicCircuit compile_to_circuit(const Pattern &p);

// Full-register state with `in` on the inputs and |0> elsewhere.
QuantumState embed_input(const Pattern &p, const QuantumState &in);
// Output-register state once every non-output qubit sits in a basis state.
QuantumState extract_output(const Pattern &p, const QuantumState &full);

// `outcomes` follows p.order; throws on a zero-probability branch.
QuantumState simulate_pattern(const Pattern &p, const QuantumState &in, const std::vector<int> &outcomes);
QuantumState simulate_pattern(const Pattern &p, const QuantumState &in, Rng &rng);

// Text format with 1-based qubit labels. Angles may name parameters
// (e.g. "-theta") resolved from `params`.
std::string to_text(const Pattern &p);
Pattern parse_pattern(std::istream &in, const std::map<std::string, double> &params = {});

}  // namespace mbvqe
