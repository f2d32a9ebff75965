#pragma once

#include <optional>

#include "qcs/random.hpp"

namespace qcs {

/// Speed of light in vacuum, m/s (exact by SI definition).
inline constexpr double kSpeedOfLight = 299792458.0;

/// Classical message channel: additive Gaussian jitter on a fixed delay,
/// truncated so nothing arrives before it was sent, plus Bernoulli loss.
struct ChannelModel {
  double base_delay = 0.0;        // seconds, >= 0
  double jitter_sigma = 0.0;      // seconds, >= 0
  double loss_probability = 0.0;  // [0, 1]

  /// Throws Errc::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Delivery time, or nullopt when the message is lost. Always consumes one
/// uniform and one normal draw so the stream position does not depend on
/// the channel parameters.
std::optional<double> deliver(const ChannelModel& channel, double send_time, RandomStream& rng);

/// Line-of-sight propagation medium with a fluctuating refractive index.
struct MediumModel {
  double distance = 0.0;                 // metres
  double mean_index = 1.0;               // >= 1
  double index_fluctuation_sigma = 0.0;  // >= 0
  double correlation_time = 0.0;         // seconds; legs are independent for now

  void validate() const;

  /// One-way transit time with the given leg index.
  double transit_time(double index) const noexcept { return distance * index / kSpeedOfLight; }

  /// Channel seen by a classical message over this medium.
  ChannelModel as_channel(double loss_probability = 0.0) const;
};

struct BaselineResult {
  double estimated_offset = 0.0;  // seconds
  double true_offset = 0.0;       // seconds
  double error = 0.0;             // estimated_offset - true_offset
};

/// Einstein synchronisation by one pulse round trip. Alice emits at her
/// local time 0, Bob notes the arrival on his clock and reflects at once,
/// Alice notes the return. Bob's offset is his arrival reading minus half
/// the round trip. Each leg draws its own refractive index, so the error is
/// distance (n_out - n_back) / (2c); quantum timing noise of the pulses is
/// folded into that same term.
BaselineResult einstein_sync(const MediumModel& medium, RandomStream& rng,
                             double true_offset = 0.0);

}  // namespace qcs
