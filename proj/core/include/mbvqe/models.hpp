#pragma once

#include <utility>
#include <vector>

#include "mbvqe/pauli.hpp"
#include "mbvqe/statevector.hpp"

namespace mbvqe {

// Planar code on an M x N plaquette lattice with open boundaries. Qubits sit
// on edges, numbered row by row: N horizontal edges, then N+1 vertical edges,
// repeated, ending with the bottom horizontal row.
int pc_num_qubits(int M, int N);
Hamiltonian planar_code_hamiltonian(int M, int N, double xi);

// Three-qubit SU(3) lattice model in the zero-baryon sector.
Hamiltonian su3_hamiltonian(double mass, double x);
Hamiltonian su3_number();        // 3 - sum Z
Hamiltonian su3_number_prime();  // (1/3) sum_{i<j} (1 - Z_i)(1 - Z_j)

// lambda XXXX + (1/lambda) sum Z
Hamiltonian z2_hamiltonian(double lambda);
struct ClosedForm {
    double energy = 0.0;
    QuantumState state;
};
ClosedForm z2_exact_gs(double lambda);

// Embedded 100-term four-qubit table at 1.6 Angstrom.
Hamiltonian lih_hamiltonian();

struct Spectrum {
    std::vector<double> energies;  // ascending, lowest `levels`
    double e0 = 0.0, e1 = 0.0, e2 = 0.0;
    double gap = 0.0;  // e1 - e0
    QuantumState ground;
    bool near_degenerate = false;  // gap below 1e-6
};

// Dense Hermitian solve up to dense_cap qubits, Lanczos with deflation above.
Spectrum exact_diagonalize(const Hamiltonian &h, int levels = 3, std::size_t dense_cap = 10);

// Zeroth plus second order in xi; the first order vanishes.
double pc_perturbative_energy(int M, int N, double xi);
double pc_unperturbed_energy(int M, int N);

// Graph-state circuit for the unperturbed planar code ground state with
// RY-CZ modifications. Pivots stay in the X basis, the other qubits get a
// final Hadamard. Parameters are shared across symmetry classes.
struct GraphAnsatzSpec {
    int M = 0, N = 0;
    int num_qubits = 0;
    std::vector<int> pivots;
    std::vector<std::pair<int, int>> edges;  // (pivot, target)
    std::vector<int> vertex_class;           // per qubit
    std::vector<int> edge_class;             // per edge
    int num_vertex_classes = 0;
    int num_edge_classes = 0;
    int layers = 1;

    // Layout: alpha per vertex class, beta per vertex class, then edge
    // classes for each layer.
    int num_params() const { return 2 * num_vertex_classes + layers * num_edge_classes; }
    int rounds() const { return 2 * layers - 1; }
    // Layer whose edge parameters drive modification round r.
    int layer_of_round(int r) const { return (r + 1) / 2; }
    bool is_pivot(int q) const;
};

GraphAnsatzSpec pc_graph_ansatz(int M, int N, int layers);

}  // namespace mbvqe
