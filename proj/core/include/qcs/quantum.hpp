#pragma once

// Exact single- and two-qubit mechanics for entangled clock pairs.
//
// Conventions:
//   * |0>, |1> are energy eigenstates with E0 < E1 and Omega = (E1 - E0)/hbar.
//   * The dual basis carries an explicit equatorial phase phi:
//       |pos_phi> = (|0> + e^{i phi}|1>)/sqrt(2)
//       |neg_phi> = (|0> - e^{i phi}|1>)/sqrt(2)
//   * Two-qubit amplitudes are ordered |0A 0B>, |0A 1B>, |1A 0B>, |1A 1B>.
//   * States are rays: compare with fidelity(), never amplitude-wise.
//
// Nothing here owns randomness; measurement takes an explicit uniform draw.

#include <array>
#include <complex>
#include <string>
#include <utility>

namespace qcs {

using Amplitude = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Tolerance for unit-norm and unitarity of states produced internally.
inline constexpr double kStateTolerance = 1e-12;
/// Tolerance applied when validating caller-supplied matrices.
inline constexpr double kInputTolerance = 1e-9;
/// Smallest branch probability measure_dual will collapse onto.
inline constexpr double kMinBranchProbability = 1e-15;

/// Maps any finite angle into [0, 2*pi).
double wrap_two_pi(double radians) noexcept;
/// Maps any finite angle into [-pi, pi).
double wrap_signed_pi(double radians) noexcept;

/// Equatorial origin of the dual basis; the difference between two parties'
/// values is the phase-lock offset delta.
class BasisPhase {
 public:
  constexpr BasisPhase() = default;
  explicit BasisPhase(double radians);

  double radians() const noexcept { return phi_; }

  friend bool operator==(const BasisPhase&, const BasisPhase&) = default;

 private:
  double phi_ = 0.0;
};

/// A qubit species with transition angular frequency omega (rad/s).
class ClockSpecies {
 public:
  ClockSpecies(std::string name, double omega);

  const std::string& name() const noexcept { return name_; }
  double omega() const noexcept { return omega_; }
  double period() const noexcept { return kTwoPi / omega_; }

  friend bool operator==(const ClockSpecies&, const ClockSpecies&) = default;

 private:
  std::string name_;
  double omega_;
};

enum class Party { alice, bob };
enum class DualOutcome { pos, neg };

const char* to_string(Party party) noexcept;
const char* to_string(DualOutcome outcome) noexcept;

struct SingleQubitState {
  Amplitude a0{1.0, 0.0};
  Amplitude a1{0.0, 0.0};

  double norm_squared() const noexcept { return std::norm(a0) + std::norm(a1); }
};

struct TwoQubitState {
  std::array<Amplitude, 4> amps{};

  static constexpr std::size_t index(int qubit_a, int qubit_b) noexcept {
    return static_cast<std::size_t>(2 * qubit_a + qubit_b);
  }

  Amplitude& at(int qubit_a, int qubit_b) noexcept { return amps[index(qubit_a, qubit_b)]; }
  const Amplitude& at(int qubit_a, int qubit_b) const noexcept {
    return amps[index(qubit_a, qubit_b)];
  }

  double norm_squared() const noexcept;

  /// |a> (x) |b>
  static TwoQubitState product(const SingleQubitState& a, const SingleQubitState& b) noexcept;
};

/// 2x2 matrix, row-major: m[0]=U00, m[1]=U01, m[2]=U10, m[3]=U11.
struct SingleQubitUnitary {
  std::array<Amplitude, 4> m{Amplitude{1.0}, Amplitude{}, Amplitude{}, Amplitude{1.0}};

  static SingleQubitUnitary identity() noexcept { return {}; }
  /// H|0> = |pos>, H|1> = |neg> with phi = 0.
  static SingleQubitUnitary hadamard() noexcept;
  static SingleQubitUnitary diagonal(double alpha, double beta) noexcept;
  /// Free evolution for dt seconds: diag(e^{-i Omega dt/2}, e^{+i Omega dt/2}).
  static SingleQubitUnitary evolution(const ClockSpecies& species, double dt) noexcept;

  Amplitude determinant() const noexcept;
  /// max_ij |(U^dagger U - I)_ij|
  double unitarity_residual() const noexcept;
  SingleQubitState apply(const SingleQubitState& s) const noexcept;
};

struct DualBasis {
  SingleQubitState pos;
  SingleQubitState neg;
};

struct OutcomeProbabilities {
  double p0;
  double p1;
};

struct DualMeasurement {
  DualOutcome outcome;
  double probability;  // probability of the branch that occurred
  TwoQubitState post_state;
};

Amplitude inner(const SingleQubitState& bra, const SingleQubitState& ket) noexcept;
Amplitude inner(const TwoQubitState& bra, const TwoQubitState& ket) noexcept;
double fidelity(const SingleQubitState& a, const SingleQubitState& b) noexcept;
double fidelity(const TwoQubitState& a, const TwoQubitState& b) noexcept;

DualBasis dual_basis_states(BasisPhase phi);

SingleQubitState evolve(const SingleQubitState& state, const ClockSpecies& species, double dt);

/// Ramsey fringe p0 = (1 + cos(Omega t + phase_offset))/2.
OutcomeProbabilities ramsey_probabilities(const ClockSpecies& species, double t,
                                          double phase_offset);

/// (|0A 1B> - e^{i eta}|1A 0B>)/sqrt(2); eta = 0 is the singlet.
TwoQubitState singlet_state(double eta);

/// (U_A (x) U_B)|state>. Throws Errc::non_unitary if either factor is not
/// unitary within kInputTolerance.
TwoQubitState apply_local(const TwoQubitState& state, const SingleQubitUnitary& u_a,
                          const SingleQubitUnitary& u_b);

/// arg(det U) in [0, 2*pi): the global phase (U (x) U) imprints on the singlet.
double dark_state_phase(const SingleQubitUnitary& u);

/// Probability that `party` sees pos when measuring in the dual basis of `phi`.
double dual_outcome_probability(const TwoQubitState& state, Party party, BasisPhase phi) noexcept;

/// Projective dual-basis measurement of one party's qubit. The outcome is pos
/// iff draw < P(pos). Throws Errc::impossible_branch when the selected branch
/// has probability below kMinBranchProbability.
DualMeasurement measure_dual(const TwoQubitState& state, Party party, BasisPhase phi,
                             double draw);

}  // namespace qcs
