#pragma once

#include <span>

namespace qcs {

struct KsResult {
  double statistic = 0.0;  // sup |F1 - F2|
  double p_value = 1.0;    // asymptotic Kolmogorov tail
};

/// Two-sample Kolmogorov-Smirnov test.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1).
double stddev(std::span<const double> v);
double rms(std::span<const double> v);

}  // namespace qcs
