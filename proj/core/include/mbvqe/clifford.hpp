#pragma once

#include <string>
#include <string_view>
#include <utility>

namespace mbvqe {

// Element of the single-qubit Clifford group modulo phase, tracked by the
// conjugation images U X U^dag and U Z U^dag.
//
// Words are time-ordered strings over {H, S}; "HS" applies H first.
class SingleQubitClifford {
public:
    SingleQubitClifford() = default;

    static SingleQubitClifford from_word(std::string_view word);

    // (sign, op) with U P U^dag = sign * op, for P in {I, X, Y, Z}.
    std::pair<int, char> conjugate(char p) const;

    // Apply this, then `next`.
    SingleQubitClifford then(const SingleQubitClifford &next) const;
    SingleQubitClifford inverse() const;

    bool is_identity() const { return x_ == 'X' && z_ == 'Z' && xs_ == 1 && zs_ == 1; }
    // Diagonal in the computational basis (fixes Z), hence commutes with CZ.
    bool is_diagonal() const { return z_ == 'Z' && zs_ == 1; }

    // Shortest word over {H, S} realizing this element.
    std::string word() const;

    bool operator==(const SingleQubitClifford &o) const {
        return x_ == o.x_ && z_ == o.z_ && xs_ == o.xs_ && zs_ == o.zs_;
    }

private:
    char x_ = 'X', z_ = 'Z';
    int xs_ = 1, zs_ = 1;
};

// Time-ordered inverse word, e.g. "HS" -> "SSSH".
std::string inverse_word(std::string_view word);
std::string canonical_word(std::string_view word);

}  // namespace mbvqe
