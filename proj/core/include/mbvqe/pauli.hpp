#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mbvqe {

using cdouble = std::complex<double>;

// Pauli string over n qubits. Character k acts on qubit k.
class PauliString {
public:
    PauliString() = default;
    explicit PauliString(std::size_t n);  // identity
    explicit PauliString(std::string_view ops);

    static PauliString single(std::size_t n, std::size_t qubit, char op);

    std::size_t size() const { return ops_.size(); }
    char operator[](std::size_t q) const { return ops_[q]; }
    void set(std::size_t q, char op);
    const std::string &str() const { return ops_; }

    bool is_identity() const;
    std::size_t weight() const;
    bool has_x(std::size_t q) const { return ops_[q] == 'X' || ops_[q] == 'Y'; }
    bool has_z(std::size_t q) const { return ops_[q] == 'Z' || ops_[q] == 'Y'; }

    // Bit masks in the amplitude index convention (qubit q is bit n-1-q).
    std::uint64_t x_mask() const;
    std::uint64_t z_mask() const;
    std::size_t y_count() const;

    bool operator==(const PauliString &o) const { return ops_ == o.ops_; }
    bool operator!=(const PauliString &o) const { return ops_ != o.ops_; }
    bool operator<(const PauliString &o) const { return ops_ < o.ops_; }

private:
    std::string ops_;
};

std::ostream &operator<<(std::ostream &os, const PauliString &p);

// Product a*b = phase * product.
std::pair<cdouble, PauliString> multiply(const PauliString &a, const PauliString &b);

bool commutes(const PauliString &a, const PauliString &b);
bool qubitwise_compatible(const PauliString &a, const PauliString &b);

struct PauliTerm {
    double coeff = 0.0;
    PauliString string;
};

class Hamiltonian {
public:
    Hamiltonian() = default;
    Hamiltonian(std::size_t n, std::vector<PauliTerm> terms);

    std::size_t num_qubits() const { return n_; }
    const std::vector<PauliTerm> &terms() const { return terms_; }
    double identity_coeff() const;

    Hamiltonian operator+(const Hamiltonian &o) const;
    Hamiltonian scaled(double s) const;

private:
    std::size_t n_ = 0;
    std::vector<PauliTerm> terms_;
};

// One term per line, "coeff STRING"; '#' starts a comment.
Hamiltonian parse_hamiltonian(std::istream &in);
std::string format_hamiltonian(const Hamiltonian &h);

struct GroupMember {
    std::size_t term = 0;  // index into Hamiltonian::terms()
    double ratio = 1.0;
};

struct MeasurementGroup {
    PauliString basis;
    std::vector<GroupMember> members;
};

// Greedy first-fit by descending |coeff|. A term compatible with several
// finished bases is listed in each of them; ratios start equal and are
// refreshed from shot counts by assign_ratios.
std::vector<MeasurementGroup> group_commuting(const Hamiltonian &h);
void assign_ratios(std::vector<MeasurementGroup> &groups, const std::vector<long> &shots);

inline constexpr std::size_t kDenseQubitCap = 14;

Eigen::MatrixXcd to_matrix(const PauliString &p);
Eigen::MatrixXcd to_matrix(const Hamiltonian &h, std::size_t cap = kDenseQubitCap);

}  // namespace mbvqe
