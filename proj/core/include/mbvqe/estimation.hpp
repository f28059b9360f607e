#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mbvqe/pauli.hpp"
#include "mbvqe/statevector.hpp"
#include "mbvqe/tableau.hpp"

namespace mbvqe {

// Column x is the distribution of read strings after preparing |x>. Index
// bit (n-1-i) is register qubit i, same as amplitudes.
struct CalibrationMatrix {
    int n = 0;
    Eigen::MatrixXd m;

    void validate() const;
    // "n" header line, then the row-major entries.
    std::string to_text() const;
    static CalibrationMatrix from_text(const std::string &text);
};

// `qubits` are the circuit qubits whose readout noise applies; empty means 0..n-1.
CalibrationMatrix build_calibration_matrix(int n, const NoiseModel &noise, long shots_per_state, Rng &rng,
                                           const std::vector<int> &qubits = {});

// Closest valid distribution to M p = c in the 2-norm. Throws
// std::domain_error when M has condition number above 1e12.
std::vector<double> mitigate_counts(const CalibrationMatrix &m, const std::vector<double> &freq);

// Frequencies over the listed cbits (first listed = most significant bit).
std::vector<double> marginal_frequencies(const Counts &c, const std::vector<int> &cbits);

// Each CX and CZ gets a random Pauli frame pair that leaves the gate's
// action unchanged.
DynamicCircuit pauli_twirl(const DynamicCircuit &c, Rng &rng);
// Frame (after) for a given frame (before) on a CX; CX P = after CX up to sign.
std::pair<PauliString, PauliString> twirl_partner_cx(const PauliString &before);

// Rotation angles rounded to the nearest multiple of pi/2.
DynamicCircuit snap_to_clifford(const DynamicCircuit &c);

// Heisenberg image U^dag P U of a Pauli through a Clifford circuit on
// `reg`. Dynamic circuits must act deterministically on the register.
SignedPauli back_propagate(const DynamicCircuit &clifford, const std::vector<int> &reg, const PauliString &p);

double self_mitigate(double phys_meas, double mitig_meas, double kappa = 1.0);
double propagate_self_mitigation_error(double phys_mean, double phys_var, double mitig_mean, double mitig_var,
                                       double kappa = 1.0);

struct MitigationConfig {
    bool readout = false;
    long calibration_shots = 10000;
    bool self_mitigation = false;
    double kappa = 1.0;
    bool twirl = false;
    std::uint64_t twirl_seed = 0;

    void validate() const;
};

struct GroupEstimate {
    PauliString basis;
    long shots = 0;
    std::vector<double> member_means;  // aligned with the group's members
    double variance = 0.0;             // contribution to the total
};

struct EstimateResult {
    double mean = 0.0;
    double variance = 0.0;
    bool clamped = false;         // covariance form came out negative
    bool mitigation_refused = false;  // some reference value fell under 0.05
    std::vector<double> term_means;  // per Hamiltonian term; identity terms are 1
    std::vector<GroupEstimate> groups;
};

// Quadratic form sum_g (1/N_g) sum_{k,l in g} c_k c_l R_k R_l Cov_g(O_k, O_l)
// with covariances taken from each group's outcome distribution.
double variance_with_covariance(const Hamiltonian &h, const std::vector<MeasurementGroup> &groups,
                                const std::vector<std::vector<double>> &probs, const std::vector<long> &shots,
                                bool *clamped = nullptr);

struct EstimateOptions {
    std::vector<int> reg;                       // circuit qubit of each Hamiltonian qubit; empty = identity
    const CalibrationMatrix *calibration = nullptr;  // built on demand when readout mitigation is on
    const DynamicCircuit *reference = nullptr;   // self-mitigation run; default snaps `circuit`
};

EstimateResult estimate_energy(const Hamiltonian &h, const DynamicCircuit &circuit, long shots, const NoiseModel &noise,
                               const MitigationConfig &mit, Rng &rng, const EstimateOptions &opt = {});

// Noiseless expectation of h on the register; measurement branches of a
// dynamic circuit are averaged with their weights.
double exact_energy(const Hamiltonian &h, const DynamicCircuit &circuit, const std::vector<int> &reg = {});

}  // namespace mbvqe
