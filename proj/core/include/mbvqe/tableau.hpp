#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbvqe/pauli.hpp"
#include "mbvqe/statevector.hpp"

namespace mbvqe {

struct SignedPauli {
    bool negative = false;
    PauliString pauli;
};

std::string to_string(const SignedPauli &p);
SignedPauli parse_signed_pauli(const std::string &text);

struct MeasureResult {
    int outcome = 0;
    bool deterministic = false;
};

// Aaronson-Gottesman tableau with destabilizers. Rows 0..n-1 are
// destabilizers, rows n..2n-1 stabilizers.
class StabilizerTableau {
public:
    StabilizerTableau() = default;
    explicit StabilizerTableau(int n);  // |0...0>

    // Builds a tableau for the state stabilized by `generators` (n
    // independent commuting Paulis); destabilizers are completed internally.
    static StabilizerTableau from_stabilizers(const std::vector<SignedPauli> &generators);

    int num_qubits() const { return n_; }

    void h(int q);
    void s(int q);
    void x(int q);
    void y(int q);
    void z(int q);
    void cx(int c, int t);
    void cz(int a, int b);
    // Applies a Clifford gate; throws for rotations.
    void apply(const Gate &g);
    void apply_word(int q, const std::string &word);

    MeasureResult measure(int q, char basis, Rng &rng);
    MeasureResult measure(int q, char basis, int forced);

    // Expectation of a Pauli: +1/-1 when in the group up to sign, else 0.
    int expectation(const PauliString &p) const;

    std::vector<SignedPauli> stabilizers() const;
    std::vector<SignedPauli> destabilizers() const;
    std::string to_text() const;

    // Reduced row echelon form of the stabilizer rows (X block first, then
    // the Z block of the X-free rows). Unique for a given group.
    void canonicalize();
    bool same_state(const StabilizerTableau &o) const;

    // Drops qubit q, which must be unentangled with the rest.
    StabilizerTableau without_qubit(int q) const;

    bool valid() const;

private:
    friend struct TableauAccess;

    void rowsum(int h, int i);
    void row_mul_stab(int target, int source);  // stabilizer rows, keeps destabilizers paired
    void swap_stab(int a, int b);
    MeasureResult measure_z(int q, std::optional<int> forced, Rng *rng);

    int n_ = 0;
    std::vector<std::vector<std::uint8_t>> x_, z_;
    std::vector<std::uint8_t> r_;
};

// Graph adjacency plus local Clifford words. The state is
// (prod_v LC_v) * prod_{(a,b) in E} CZ_ab |+>^n, each LC word applied after the
// graph is prepared.
struct GraphStateForm {
    int n = 0;
    std::vector<std::vector<std::uint8_t>> adjacency;
    std::vector<std::string> local_cliffords;

    std::vector<std::pair<int, int>> edges() const;
    StabilizerTableau to_tableau() const;
};

// `priority` orders columns for the X-block elimination; columns late in the
// order are the ones that receive Hadamards. Empty means 0..n-1.
GraphStateForm to_graph_state(const StabilizerTableau &tab, const std::vector<int> &priority = {});

}  // namespace mbvqe
