#include "qcs/estimation.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>
#include <sstream>

#include "qcs/error.hpp"

namespace qcs {

namespace {

struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  double chi2 = 0.0;
};

// Solves min ||sqrt(W)(X c - y)||^2 by pivoted QR and returns the covariance
// (X^T W X)^{-1}, which is exact when 1/w are the true point variances.
LinearFit weighted_lsq(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd xw = sw.asDiagonal() * x;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    throw Error(Errc::rank_deficient, "least-squares design is rank deficient");
  }
  LinearFit fit;
  fit.coef = qr.solve(yw);
  const Eigen::Index p = x.cols();
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd cov_perm = r_inv * r_inv.transpose();
  const auto perm = qr.colsPermutation();
  fit.cov = perm * cov_perm * perm.transpose();
  fit.chi2 = (xw * fit.coef - yw).squaredNorm();
  return fit;
}

void validate_series(const PopulationSeries& series, const char* who) {
  if (series.empty()) {
    throw Error(Errc::invalid_series, std::string(who) + ": empty series");
  }
  for (const auto& p : series.points) {
    if (p.batch_size == 0) {
      throw Error(Errc::invalid_series, std::string(who) + ": batch_size 0 in series");
    }
    if (p.count_pos + p.count_neg != p.batch_size) {
      throw Error(Errc::invalid_series, std::string(who) + ": counts do not sum to batch_size");
    }
    if (!std::isfinite(p.t)) throw Error(Errc::invalid_series, std::string(who) + ": bad time");
  }
}

// Add-half estimate keeps the binomial variance positive at 0 and n counts.
double smoothed_fraction(std::uint64_t count, std::uint64_t n) {
  return (static_cast<double>(count) + 0.5) / (static_cast<double>(n) + 1.0);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

double fold_to_pi(double radians) {
  double r = std::fmod(radians, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r -= kPi;
  return r;
}

// Envelope model pieces at one time point.
struct BeatTerms {
  double env_sin;  // sin(hd t)
  double env_cos;  // cos(hd t)
  double fast_arg; // hs t
};

class EnvelopeModel {
 public:
  EnvelopeModel(const BeatSeries& beats, double omega1, double omega2)
      : beats_(beats), half_diff_(0.5 * (omega1 - omega2)), half_sum_(0.5 * (omega1 + omega2)) {
    terms_.reserve(beats.size());
    weights_.reserve(beats.size());
    for (std::size_t k = 0; k < beats.size(); ++k) {
      const double t = beats.times[k];
      terms_.push_back({std::sin(half_diff_ * t), std::cos(half_diff_ * t), half_sum_ * t});
      const double s = beats.sigma_per_point[k];
      weights_.push_back(1.0 / (s * s));
    }
  }

  struct Envelope {
    double a = 0.0;  // E cos(psi_env)
    double b = 0.0;  // E sin(psi_env)
    double rss = 0.0;
  };

  // For fixed psi_fast the model is linear in (a, b).
  Envelope solve(double psi_fast) const {
    double suu = 0.0, suv = 0.0, svv = 0.0, sud = 0.0, svd = 0.0, sdd = 0.0;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const double s = std::sin(terms_[k].fast_arg + psi_fast);
      const double u = s * terms_[k].env_sin;
      const double v = s * terms_[k].env_cos;
      const double d = beats_.diff[k];
      const double w = weights_[k];
      suu += w * u * u;
      suv += w * u * v;
      svv += w * v * v;
      sud += w * u * d;
      svd += w * v * d;
      sdd += w * d * d;
    }
    Envelope e;
    const double det = suu * svv - suv * suv;
    if (!(std::abs(det) > 1e-300)) {
      e.rss = sdd;
      return e;
    }
    e.a = (svv * sud - suv * svd) / det;
    e.b = (suu * svd - suv * sud) / det;
    e.rss = residual(e.a, e.b, psi_fast);
    return e;
  }

  double residual(double a, double b, double psi_fast) const {
    double rss = 0.0;
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const double r = beats_.diff[k] - value(k, a, b, psi_fast);
      rss += weights_[k] * r * r;
    }
    return rss;
  }

  double value(std::size_t k, double a, double b, double psi_fast) const {
    return std::sin(terms_[k].fast_arg + psi_fast) * (a * terms_[k].env_sin + b * terms_[k].env_cos);
  }

  // Rows of d(model)/d(a, b, psi_fast).
  Eigen::MatrixXd jacobian(double a, double b, double psi_fast) const {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(terms_.size()), 3);
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      const double s = std::sin(terms_[k].fast_arg + psi_fast);
      const double c = std::cos(terms_[k].fast_arg + psi_fast);
      j(row, 0) = s * terms_[k].env_sin;
      j(row, 1) = s * terms_[k].env_cos;
      j(row, 2) = c * (a * terms_[k].env_sin + b * terms_[k].env_cos);
    }
    return j;
  }

  Eigen::VectorXd weights() const {
    return Eigen::Map<const Eigen::VectorXd>(weights_.data(), static_cast<Eigen::Index>(weights_.size()));
  }

  Eigen::VectorXd residual_vector(double a, double b, double psi_fast) const {
    Eigen::VectorXd r(static_cast<Eigen::Index>(terms_.size()));
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      r(static_cast<Eigen::Index>(k)) = beats_.diff[k] - value(k, a, b, psi_fast);
    }
    return r;
  }

  // Fast phase read off sliding windows. Inside a window the envelope is
  // roughly constant, so diff ~ alpha cos(hs t) + beta sin(hs t) =
  // R sin(hs t + psi) with psi = atan2(alpha, beta). The envelope sign flips
  // psi by pi, so windows are combined on the doubled angle.
  double windowed_fast_phase() const {
    const double t_first = beats_.times.front();
    const double t_last = beats_.times.back();
    const double span = t_last - t_first;
    const double fast_period = kTwoPi / std::abs(half_sum_);
    const double env_quarter = 0.25 * kPi / std::abs(half_diff_);
    double width = std::min(std::max(2.0 * fast_period, span / 16.0), env_quarter);
    width = std::max(width, 2.0 * fast_period);
    if (!(width > 0.0)) return 0.0;

    std::complex<double> acc{};
    std::size_t begin = 0;
    for (double start = t_first; start <= t_last; start += 0.5 * width) {
      while (begin < beats_.size() && beats_.times[begin] < start) ++begin;
      std::size_t end = begin;
      while (end < beats_.size() && beats_.times[end] < start + width) ++end;
      if (end - begin < 3) continue;
      double scc = 0.0, scs = 0.0, sss = 0.0, scd = 0.0, ssd = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const double c = std::cos(terms_[k].fast_arg);
        const double s = std::sin(terms_[k].fast_arg);
        const double w = weights_[k];
        const double d = beats_.diff[k];
        scc += w * c * c;
        scs += w * c * s;
        sss += w * s * s;
        scd += w * c * d;
        ssd += w * s * d;
      }
      const double det = scc * sss - scs * scs;
      if (!(std::abs(det) > 1e-300)) continue;
      const double alpha = (sss * scd - scs * ssd) / det;
      const double beta = (scc * ssd - scs * scd) / det;
      const std::complex<double> z{beta, alpha};
      acc += z * z;
    }
    if (std::abs(acc) == 0.0) return 0.0;
    return 0.5 * std::arg(acc);
  }

 private:
  const BeatSeries& beats_;
  double half_diff_;
  double half_sum_;
  std::vector<BeatTerms> terms_;
  std::vector<double> weights_;
};

}  // namespace

PhaseEstimate estimate_phase(const PopulationSeries& series, const ClockSpecies& species) {
  validate_series(series, "estimate_phase");
  std::set<double> distinct;
  for (const auto& p : series.points) distinct.insert(p.t);
  if (distinct.size() < 3) {
    throw Error(Errc::rank_deficient, "estimate_phase: need at least 3 distinct sample times");
  }

  const auto n = static_cast<Eigen::Index>(series.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  Eigen::VectorXd batch(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& p = series.points[static_cast<std::size_t>(k)];
    const double arg = species.omega() * p.t;
    x(k, 0) = std::cos(arg);
    x(k, 1) = std::sin(arg);
    x(k, 2) = 1.0;
    y(k) = p.fraction_pos();
    batch(k) = static_cast<double>(p.batch_size);
  }

  // Pass 1 fixes the model probabilities; pass 2 weights each point by the
  // inverse binomial variance at that probability.
  const LinearFit first = weighted_lsq(x, y, batch);
  Eigen::VectorXd w(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double floor = 0.5 / (batch(k) + 1.0);
    const double p = std::clamp(x.row(k).dot(first.coef), floor, 1.0 - floor);
    w(k) = batch(k) / (p * (1.0 - p));
  }
  const LinearFit fit = weighted_lsq(x, y, w);

  const double a = fit.coef(0);
  const double b = fit.coef(1);
  const double r2 = a * a + b * b;
  PhaseEstimate est;
  est.phase = wrap_two_pi(std::atan2(-b, a));
  est.amplitude = 2.0 * std::sqrt(r2);
  est.offset = fit.coef(2);
  est.n_samples_used = series.size();
  // phi = atan2(-b, a): d phi/da = b/r2, d phi/db = -a/r2.
  Eigen::Vector2d g(b / r2, -a / r2);
  const double var = g.dot(fit.cov.topLeftCorner<2, 2>() * g);
  est.sigma = r2 > 0.0 ? std::sqrt(std::max(var, 0.0)) : std::numeric_limits<double>::infinity();
  est.residual = series.size() > 3 ? fit.chi2 / static_cast<double>(series.size() - 3) : 0.0;
  return est;
}

BeatSeries beat_difference(const PopulationSeries& series1, const PopulationSeries& series2) {
  validate_series(series1, "beat_difference");
  validate_series(series2, "beat_difference");
  if (series1.size() != series2.size()) {
    throw Error(Errc::grid_mismatch, "beat_difference: series lengths differ");
  }
  BeatSeries beats;
  beats.times.reserve(series1.size());
  beats.diff.reserve(series1.size());
  beats.sigma_per_point.reserve(series1.size());
  for (std::size_t k = 0; k < series1.size(); ++k) {
    const auto& p1 = series1.points[k];
    const auto& p2 = series2.points[k];
    if (p1.t != p2.t) {
      std::ostringstream os;
      os << "beat_difference: time grids differ at index " << k << " (" << p1.t << " vs " << p2.t
         << ")";
      throw Error(Errc::grid_mismatch, os.str());
    }
    const double q1 = smoothed_fraction(p1.count_pos, p1.batch_size);
    const double q2 = smoothed_fraction(p2.count_pos, p2.batch_size);
    const double var = q1 * (1.0 - q1) / static_cast<double>(p1.batch_size) +
                       q2 * (1.0 - q2) / static_cast<double>(p2.batch_size);
    beats.times.push_back(p1.t);
    beats.diff.push_back(p1.fraction_pos() - p2.fraction_pos());
    beats.sigma_per_point.push_back(std::sqrt(var));
  }
  return beats;
}

PhaseEstimate envelope_phase(const BeatSeries& beats, double omega1, double omega2) {
  if (beats.diff.size() != beats.size() || beats.sigma_per_point.size() != beats.size()) {
    throw Error(Errc::invalid_series, "envelope_phase: beat series lengths disagree");
  }
  if (!(omega1 > 0.0) || !(omega2 > 0.0)) {
    throw Error(Errc::invalid_argument, "envelope_phase: frequencies must be positive");
  }
  if (omega1 == omega2) {
    throw Error(Errc::species_collision, "envelope_phase: the two frequencies coincide");
  }
  if (beats.size() < 4) {
    throw Error(Errc::rank_deficient, "envelope_phase: need at least 4 beat samples");
  }
  const double max_step = kPi / (omega1 + omega2);
  for (std::size_t k = 0; k < beats.size(); ++k) {
    if (!(beats.sigma_per_point[k] > 0.0) || !std::isfinite(beats.diff[k])) {
      throw Error(Errc::invalid_series, "envelope_phase: point sigmas must be positive");
    }
    if (k > 0) {
      const double step = beats.times[k] - beats.times[k - 1];
      if (!(step > 0.0)) {
        throw Error(Errc::invalid_series, "envelope_phase: times must be strictly increasing");
      }
      if (!(step < max_step)) {
        std::ostringstream os;
        os << "envelope_phase: grid step " << step << " does not resolve the fast oscillation "
           << "(needs < " << max_step << ")";
        throw Error(Errc::under_resolved, os.str());
      }
    }
  }

  const EnvelopeModel model(beats, omega1, omega2);

  // Stage one, then a coarse scan over one period of psi_fast in case the
  // windows were misled by noise.
  const double seed = model.windowed_fast_phase();
  constexpr int kScan = 32;
  double best_psi = seed;
  double best_rss = model.solve(seed).rss;
  for (int j = 1; j < kScan; ++j) {
    const double psi = seed + kPi * j / kScan;
    const double rss = model.solve(psi).rss;
    if (rss < best_rss) {
      best_rss = rss;
      best_psi = psi;
    }
  }

  // Stage two: profile minimisation over psi_fast.
  const auto profile = [&](double psi) { return model.solve(psi).rss; };
  const auto [psi_min, rss_min] = boost::math::tools::brent_find_minima(
      profile, best_psi - kPi / kScan, best_psi + kPi / kScan,
      std::numeric_limits<double>::digits / 2);
  (void)rss_min;

  // Gauss-Newton polish on (a, b, psi_fast); Brent alone stops near 1e-8.
  auto env = model.solve(psi_min);
  Eigen::Vector3d params(env.a, env.b, psi_min);
  double rss = model.residual(params(0), params(1), params(2));
  const Eigen::VectorXd w = model.weights();
  for (int iter = 0; iter < 5; ++iter) {
    const Eigen::MatrixXd j = model.jacobian(params(0), params(1), params(2));
    const Eigen::VectorXd r = model.residual_vector(params(0), params(1), params(2));
    const Eigen::Matrix3d jtj = j.transpose() * w.asDiagonal() * j;
    const Eigen::Vector3d jtr = j.transpose() * w.cwiseProduct(r);
    const Eigen::Vector3d step = jtj.ldlt().solve(jtr);
    if (!step.allFinite()) break;
    const Eigen::Vector3d trial = params + step;
    const double trial_rss = model.residual(trial(0), trial(1), trial(2));
    if (!(trial_rss <= rss)) break;
    params = trial;
    rss = trial_rss;
  }

  const double a = params(0);
  const double b = params(1);
  const double amplitude = std::hypot(a, b);

  std::vector<double> sigmas = beats.sigma_per_point;
  const double noise_floor = 3.0 * median(std::move(sigmas));
  if (!(amplitude >= noise_floor)) {
    std::ostringstream os;
    os << "envelope_phase: envelope amplitude " << amplitude << " is below the noise floor "
       << noise_floor;
    throw Error(Errc::inconclusive, os.str());
  }

  const Eigen::MatrixXd j = model.jacobian(a, b, params(2));
  const Eigen::Matrix3d info = j.transpose() * w.asDiagonal() * j;
  const Eigen::Matrix3d cov = info.inverse();
  const double r2 = a * a + b * b;
  // psi_env = atan2(b, a): d/da = -b/r2, d/db = a/r2.
  const Eigen::Vector2d g(-b / r2, a / r2);
  const double var = g.dot(cov.topLeftCorner<2, 2>() * g);

  PhaseEstimate est;
  est.phase = fold_to_pi(std::atan2(b, a));
  est.sigma = std::sqrt(std::max(var, 0.0));
  est.amplitude = amplitude;
  est.offset = 0.0;
  est.n_samples_used = beats.size();
  est.residual = beats.size() > 3 ? rss / static_cast<double>(beats.size() - 3) : 0.0;
  return est;
}

TimeEstimate first_envelope_maximum(const PhaseEstimate& envelope, double omega1, double omega2,
                                    double t_begin, double t_end) {
  if (omega1 == omega2) {
    throw Error(Errc::species_collision, "first_envelope_maximum: frequencies coincide");
  }
  const double half_diff = 0.5 * (omega1 - omega2);
  // Maxima of |sin(hd t + psi)| sit at hd t + psi = pi/2 + k pi.
  const double spacing = kPi / std::abs(half_diff);
  const double anchor = (0.5 * kPi - envelope.phase) / half_diff;
  const double m = std::ceil((t_begin - anchor) / spacing);
  const double t_max = anchor + m * spacing;
  if (t_max > t_end) {
    std::ostringstream os;
    os << "first_envelope_maximum: first maximum at " << t_max << " lies outside the window ["
       << t_begin << ", " << t_end << "]";
    throw Error(Errc::inconclusive, os.str());
  }
  return {t_max, envelope.sigma / std::abs(half_diff)};
}

TimeEstimate first_envelope_maximum(const BeatSeries& beats, double omega1, double omega2) {
  const PhaseEstimate env = envelope_phase(beats, omega1, omega2);
  return first_envelope_maximum(env, omega1, omega2, beats.times.front(), beats.times.back());
}

}  // namespace qcs
