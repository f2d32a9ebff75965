#include "qcs/quantum.hpp"

#include <cmath>
#include <sstream>

#include "qcs/error.hpp"

namespace qcs {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

Amplitude phase_factor(double radians) { return std::polar(1.0, radians); }

void require_unitary(const SingleQubitUnitary& u, const char* what) {
  const double residual = u.unitarity_residual();
  if (!(residual <= kInputTolerance)) {
    std::ostringstream os;
    os << what << ": matrix is not unitary (residual " << residual << ")";
    throw Error(Errc::non_unitary, os.str());
  }
}

// Amplitudes of the other party's qubit after projecting `party` onto the
// dual-basis vector with the given sign (+1 pos, -1 neg). Not normalised.
std::array<Amplitude, 2> project_party(const TwoQubitState& s, Party party, BasisPhase phi,
                                       double sign) noexcept {
  const Amplitude conj_phase = sign * phase_factor(-phi.radians());
  std::array<Amplitude, 2> rest{};
  for (int other = 0; other < 2; ++other) {
    if (party == Party::alice) {
      rest[other] = kInvSqrt2 * (s.at(0, other) + conj_phase * s.at(1, other));
    } else {
      rest[other] = kInvSqrt2 * (s.at(other, 0) + conj_phase * s.at(other, 1));
    }
  }
  return rest;
}

}  // namespace

double wrap_two_pi(double radians) noexcept {
  double r = std::fmod(radians, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;  // fmod of a tiny negative can land on 2*pi
  return r;
}

double wrap_signed_pi(double radians) noexcept { return wrap_two_pi(radians + kPi) - kPi; }

BasisPhase::BasisPhase(double radians) {
  if (!std::isfinite(radians)) {
    throw Error(Errc::invalid_argument, "basis phase must be finite");
  }
  phi_ = wrap_two_pi(radians);
}

ClockSpecies::ClockSpecies(std::string name, double omega) : name_(std::move(name)), omega_(omega) {
  if (!(omega > 0.0) || !std::isfinite(omega)) {
    throw Error(Errc::invalid_argument, "species '" + name_ + "': omega must be finite and > 0");
  }
}

const char* to_string(Party party) noexcept { return party == Party::alice ? "alice" : "bob"; }

const char* to_string(DualOutcome outcome) noexcept {
  return outcome == DualOutcome::pos ? "pos" : "neg";
}

double TwoQubitState::norm_squared() const noexcept {
  double n = 0.0;
  for (const auto& a : amps) n += std::norm(a);
  return n;
}

TwoQubitState TwoQubitState::product(const SingleQubitState& a,
                                     const SingleQubitState& b) noexcept {
  TwoQubitState s;
  s.at(0, 0) = a.a0 * b.a0;
  s.at(0, 1) = a.a0 * b.a1;
  s.at(1, 0) = a.a1 * b.a0;
  s.at(1, 1) = a.a1 * b.a1;
  return s;
}

SingleQubitUnitary SingleQubitUnitary::hadamard() noexcept {
  return {{Amplitude{kInvSqrt2}, Amplitude{kInvSqrt2}, Amplitude{kInvSqrt2},
           Amplitude{-kInvSqrt2}}};
}

SingleQubitUnitary SingleQubitUnitary::diagonal(double alpha, double beta) noexcept {
  return {{phase_factor(alpha), Amplitude{}, Amplitude{}, phase_factor(beta)}};
}

SingleQubitUnitary SingleQubitUnitary::evolution(const ClockSpecies& species, double dt) noexcept {
  const double half = 0.5 * species.omega() * dt;
  return diagonal(-half, half);
}

Amplitude SingleQubitUnitary::determinant() const noexcept { return m[0] * m[3] - m[1] * m[2]; }

double SingleQubitUnitary::unitarity_residual() const noexcept {
  double worst = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      // (U^dagger U)_ij = sum_k conj(U_ki) U_kj
      Amplitude v = std::conj(m[i]) * m[j] + std::conj(m[2 + i]) * m[2 + j];
      if (i == j) v -= 1.0;
      const double mag = std::abs(v);
      if (!(mag <= worst)) worst = mag;  // NaN propagates as failure
    }
  }
  return worst;
}

SingleQubitState SingleQubitUnitary::apply(const SingleQubitState& s) const noexcept {
  return {m[0] * s.a0 + m[1] * s.a1, m[2] * s.a0 + m[3] * s.a1};
}

Amplitude inner(const SingleQubitState& bra, const SingleQubitState& ket) noexcept {
  return std::conj(bra.a0) * ket.a0 + std::conj(bra.a1) * ket.a1;
}

Amplitude inner(const TwoQubitState& bra, const TwoQubitState& ket) noexcept {
  Amplitude acc{};
  for (std::size_t i = 0; i < 4; ++i) acc += std::conj(bra.amps[i]) * ket.amps[i];
  return acc;
}

double fidelity(const SingleQubitState& a, const SingleQubitState& b) noexcept {
  return std::abs(inner(a, b));
}

double fidelity(const TwoQubitState& a, const TwoQubitState& b) noexcept {
  return std::abs(inner(a, b));
}

DualBasis dual_basis_states(BasisPhase phi) {
  const Amplitude e = phase_factor(phi.radians());
  return {{Amplitude{kInvSqrt2}, kInvSqrt2 * e}, {Amplitude{kInvSqrt2}, -kInvSqrt2 * e}};
}

SingleQubitState evolve(const SingleQubitState& state, const ClockSpecies& species, double dt) {
  if (!std::isfinite(dt)) throw Error(Errc::invalid_argument, "evolve: dt must be finite");
  return SingleQubitUnitary::evolution(species, dt).apply(state);
}

OutcomeProbabilities ramsey_probabilities(const ClockSpecies& species, double t,
                                          double phase_offset) {
  const double p0 = 0.5 * (1.0 + std::cos(species.omega() * t + phase_offset));
  return {p0, 1.0 - p0};
}

TwoQubitState singlet_state(double eta) {
  TwoQubitState s;
  s.at(0, 1) = Amplitude{kInvSqrt2};
  s.at(1, 0) = -kInvSqrt2 * phase_factor(eta);
  return s;
}

TwoQubitState apply_local(const TwoQubitState& state, const SingleQubitUnitary& u_a,
                          const SingleQubitUnitary& u_b) {
  require_unitary(u_a, "apply_local(U_A)");
  require_unitary(u_b, "apply_local(U_B)");
  TwoQubitState out;
  for (int ra = 0; ra < 2; ++ra) {
    for (int rb = 0; rb < 2; ++rb) {
      Amplitude acc{};
      for (int ca = 0; ca < 2; ++ca) {
        for (int cb = 0; cb < 2; ++cb) {
          acc += u_a.m[2 * ra + ca] * u_b.m[2 * rb + cb] * state.at(ca, cb);
        }
      }
      out.at(ra, rb) = acc;
    }
  }
  return out;
}

double dark_state_phase(const SingleQubitUnitary& u) {
  require_unitary(u, "dark_state_phase");
  return wrap_two_pi(std::arg(u.determinant()));
}

double dual_outcome_probability(const TwoQubitState& state, Party party, BasisPhase phi) noexcept {
  const auto rest = project_party(state, party, phi, +1.0);
  return std::norm(rest[0]) + std::norm(rest[1]);
}

DualMeasurement measure_dual(const TwoQubitState& state, Party party, BasisPhase phi,
                             double draw) {
  if (!(draw >= 0.0 && draw < 1.0)) {
    throw Error(Errc::invalid_argument, "measure_dual: draw must lie in [0, 1)");
  }
  if (std::abs(state.norm_squared() - 1.0) > kInputTolerance) {
    throw Error(Errc::invalid_argument, "measure_dual: state is not normalised");
  }

  const double p_pos = dual_outcome_probability(state, party, phi);
  const DualOutcome outcome = draw < p_pos ? DualOutcome::pos : DualOutcome::neg;
  const double sign = outcome == DualOutcome::pos ? 1.0 : -1.0;
  auto rest = project_party(state, party, phi, sign);
  const double p_branch = std::norm(rest[0]) + std::norm(rest[1]);
  if (p_branch < kMinBranchProbability) {
    std::ostringstream os;
    os << "measure_dual: drawn branch " << to_string(outcome) << " has probability " << p_branch;
    throw Error(Errc::impossible_branch, os.str());
  }

  const double scale = 1.0 / std::sqrt(p_branch);
  const SingleQubitState other{rest[0] * scale, rest[1] * scale};
  const DualBasis basis = dual_basis_states(phi);
  const SingleQubitState& mine = outcome == DualOutcome::pos ? basis.pos : basis.neg;

  DualMeasurement result{outcome, p_branch, {}};
  result.post_state = party == Party::alice ? TwoQubitState::product(mine, other)
                                            : TwoQubitState::product(other, mine);
  return result;
}

}  // namespace qcs
