#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mbvqe/pauli.hpp"

namespace mbvqe {

using Rng = std::mt19937_64;

// Independent stream seed for task `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

enum class GateType { H, S, X, Y, Z, RX, RY, RZ, CZ, CX };

const char *gate_name(GateType g);
GateType parse_gate(const std::string &name);
int gate_arity(GateType g);
bool gate_has_param(GateType g);

struct Gate {
    GateType type = GateType::H;
    std::vector<int> qubits;
    double param = 0.0;
};

// Amplitude index convention: qubit q is bit (n-1-q), so basis label
// strings read with qubit 0 leftmost.
class QuantumState {
public:
    QuantumState() = default;
    explicit QuantumState(int n);  // |0...0>
    QuantumState(int n, std::vector<cdouble> amps);

    static QuantumState basis(int n, std::uint64_t index);
    static QuantumState random(int n, Rng &rng);
    static QuantumState plus(int n);

    int num_qubits() const { return n_; }
    const std::vector<cdouble> &amplitudes() const { return amps_; }
    std::vector<cdouble> &amplitudes() { return amps_; }
    cdouble amplitude(std::uint64_t index) const { return amps_[index]; }

    void apply(const Gate &g);
    void apply(GateType t, std::vector<int> qubits, double param = 0.0) { apply(Gate{t, std::move(qubits), param}); }
    void apply_pauli(const PauliString &p);  // exact Pauli matrix, phases included

    double prob_one(int q) const;
    // Collapse qubit q onto `outcome`; returns the branch probability.
    double project(int q, int outcome);
    int measure(int q, Rng &rng);
    void reset(int q, Rng &rng);

    double norm() const;
    void normalize();

    double expectation(const PauliString &p) const;
    double expectation(const Hamiltonian &h) const;

    // State of this register tensored with `other` (this = leading qubits).
    QuantumState tensor(const QuantumState &other) const;

private:
    int n_ = 0;
    std::vector<cdouble> amps_;
};

double fidelity(const QuantumState &a, const QuantumState &b);

// <t| Tr_rest(|psi><psi|) |t> where `keep` lists the qubits of psi that
// carry t, in t's qubit order.
double reduced_fidelity(const QuantumState &psi, const std::vector<int> &keep, const QuantumState &t);

double expectation_exact(const QuantumState &s, const PauliString &p);

struct Instruction {
    enum class Kind { Gate, Measure, Reset, Conditional };
    Kind kind = Kind::Gate;
    Gate gate;                    // Gate, Conditional
    int qubit = -1;               // Measure, Reset
    int cbit = -1;                // Measure
    std::vector<int> condition;   // Conditional: fires when the XOR of these cbits is 1
};

class DynamicCircuit {
public:
    DynamicCircuit() = default;
    DynamicCircuit(int n_qubits, int n_cbits) : n_qubits_(n_qubits), n_cbits_(n_cbits) {}

    int num_qubits() const { return n_qubits_; }
    int num_cbits() const { return n_cbits_; }
    int add_cbit() { return n_cbits_++; }
    const std::vector<Instruction> &instructions() const { return ins_; }
    std::vector<Instruction> &instructions() { return ins_; }

    DynamicCircuit &gate(GateType t, std::vector<int> qubits, double param = 0.0);
    DynamicCircuit &h(int q) { return gate(GateType::H, {q}); }
    DynamicCircuit &s(int q) { return gate(GateType::S, {q}); }
    DynamicCircuit &x(int q) { return gate(GateType::X, {q}); }
    DynamicCircuit &y(int q) { return gate(GateType::Y, {q}); }
    DynamicCircuit &z(int q) { return gate(GateType::Z, {q}); }
    DynamicCircuit &rx(int q, double t) { return gate(GateType::RX, {q}, t); }
    DynamicCircuit &ry(int q, double t) { return gate(GateType::RY, {q}, t); }
    DynamicCircuit &rz(int q, double t) { return gate(GateType::RZ, {q}, t); }
    DynamicCircuit &cz(int a, int b) { return gate(GateType::CZ, {a, b}); }
    DynamicCircuit &cx(int c, int t) { return gate(GateType::CX, {c, t}); }
    DynamicCircuit &measure(int q, int c);
    DynamicCircuit &reset(int q);
    DynamicCircuit &conditional(std::vector<int> cbits, Gate g);
    DynamicCircuit &append(const DynamicCircuit &other);

    // Throws on out-of-range indices or conditionals reading unwritten cbits.
    void validate() const;

    std::size_t count_two_qubit() const;
    std::string to_text() const;

private:
    int n_qubits_ = 0;
    int n_cbits_ = 0;
    std::vector<Instruction> ins_;
};

struct ReadoutFlip {
    double p1_given0 = 0.0;  // P(read 1 | prep 0)
    double p0_given1 = 0.0;  // P(read 0 | prep 1)
};

struct NoiseModel {
    double two_qubit_depolarizing = 0.0;
    ReadoutFlip readout_all;             // used for qubits without an entry below
    std::map<int, ReadoutFlip> readout;  // per-qubit overrides

    ReadoutFlip flip_for(int q) const;
    bool noiseless() const;
    void validate() const;
};

using Counts = std::map<std::string, long>;  // cbit 0 is the leftmost character

std::string counts_to_json(const Counts &c);
Counts counts_from_json(const std::string &text);

struct RunResult {
    QuantumState state;
    std::vector<int> cbits;
};

struct Branch {
    double probability = 0.0;
    QuantumState state;
    std::vector<int> cbits;
};

QuantumState initial_state(const DynamicCircuit &c, const QuantumState *init);

// Single trajectory with Born-rule outcomes drawn from rng.
RunResult run_exact(const DynamicCircuit &c, Rng &rng, const QuantumState *init = nullptr);

// Measurements take the listed outcomes in program order; a zero-probability
// outcome throws.
RunResult run_forced(const DynamicCircuit &c, const std::vector<int> &outcomes, const QuantumState *init = nullptr);

// Every measurement branch with nonzero weight. Resets act as measure + X.
std::vector<Branch> enumerate_branches(const DynamicCircuit &c, const QuantumState *init = nullptr);

// Exact distribution of the classical record (bit c of the key is cbit c)
// under readout flips only.
std::map<std::uint64_t, double> cbit_distribution(const DynamicCircuit &c, const NoiseModel &noise,
                                                  const QuantumState *init = nullptr);

Counts run_counts(const DynamicCircuit &c, long shots, const NoiseModel &noise, Rng &rng,
                  const QuantumState *init = nullptr);

std::string cbits_to_string(std::uint64_t key, int n_cbits);

}  // namespace mbvqe
