#pragma once

#include <cstddef>
#include <vector>

#include "qcs/ensemble.hpp"
#include "qcs/quantum.hpp"

namespace qcs {

/// Fitted phase with its 1-sigma standard error.
struct PhaseEstimate {
  double phase = 0.0;         // radians, [0, 2*pi) (envelope phases: [0, pi))
  double sigma = 0.0;         // radians
  std::size_t n_samples_used = 0;  // time points entering the fit
  double residual = 0.0;      // chi^2 per degree of freedom
  double amplitude = 0.0;     // fitted oscillation amplitude
  double offset = 0.0;        // fitted constant term (0.5 for a healthy Ramsey fringe)
};

struct BeatSeries {
  std::vector<double> times;
  std::vector<double> diff;             // p1_hat - p2_hat
  std::vector<double> sigma_per_point;  // binomial standard error of diff

  std::size_t size() const noexcept { return times.size(); }
};

struct TimeEstimate {
  double t = 0.0;
  double sigma = 0.0;
};

/// Weighted least-squares fit of p(t) = (1 + cos(Omega t + phi))/2 using the
/// linear model a cos(Omega t) + b sin(Omega t) + c; phi = atan2(-b, a).
/// Omega is taken as exact. Weights are binomial variances evaluated on a
/// first unweighted pass.
///
/// Throws Errc::invalid_series for empty series or zero batch sizes and
/// Errc::rank_deficient when the grid cannot separate the three terms.
PhaseEstimate estimate_phase(const PopulationSeries& series, const ClockSpecies& species);

/// diff_k = p1_hat(t_k) - p2_hat(t_k). Throws Errc::grid_mismatch unless both
/// series share the same time grid.
BeatSeries beat_difference(const PopulationSeries& series1, const PopulationSeries& series2);

/// Fits diff(t) = E sin((w1-w2)t/2 + psi_env) sin((w1+w2)t/2 + psi_fast).
///
/// Stage one reads the fast phase off short sliding windows; stage two
/// profiles the residual over psi_fast, solving the envelope (E, psi_env)
/// linearly at each trial value. The returned phase is psi_env folded into
/// [0, pi) (E > 0), which does not depend on a common phase shift of both
/// carriers.
///
/// Throws Errc::under_resolved when the grid spacing reaches pi/(w1+w2),
/// Errc::species_collision when w1 == w2, and Errc::inconclusive when the
/// fitted amplitude is under three times the median point sigma.
PhaseEstimate envelope_phase(const BeatSeries& beats, double omega1, double omega2);

/// Earliest maximum of |sin((w1-w2)t/2 + psi_env)| at or after t_begin.
/// Throws Errc::inconclusive if it falls after t_end.
TimeEstimate first_envelope_maximum(const PhaseEstimate& envelope, double omega1, double omega2,
                                    double t_begin, double t_end);

/// Fits the envelope and locates its first maximum inside the sampled window.
TimeEstimate first_envelope_maximum(const BeatSeries& beats, double omega1, double omega2);

}  // namespace qcs
