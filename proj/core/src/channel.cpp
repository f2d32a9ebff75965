#include "qcs/channel.hpp"

#include <algorithm>
#include <cmath>

#include "qcs/error.hpp"

namespace qcs {

void ChannelModel::validate() const {
  if (!(base_delay >= 0.0) || !std::isfinite(base_delay)) {
    throw Error(Errc::invalid_argument, "channel base_delay must be finite and >= 0");
  }
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) {
    throw Error(Errc::invalid_argument, "channel jitter_sigma must be finite and >= 0");
  }
  if (!(loss_probability >= 0.0 && loss_probability <= 1.0)) {
    throw Error(Errc::invalid_argument, "channel loss_probability must lie in [0, 1]");
  }
}

std::optional<double> deliver(const ChannelModel& channel, double send_time, RandomStream& rng) {
  if (!std::isfinite(send_time)) {
    throw Error(Errc::invalid_argument, "deliver: send_time must be finite");
  }
  const double loss_draw = rng.uniform();
  const double jitter = rng.normal(0.0, 1.0) * channel.jitter_sigma;
  if (loss_draw < channel.loss_probability) return std::nullopt;
  return send_time + std::max(0.0, channel.base_delay + jitter);
}

void MediumModel::validate() const {
  if (!(distance > 0.0) || !std::isfinite(distance)) {
    throw Error(Errc::invalid_argument, "medium distance must be finite and > 0");
  }
  if (!(mean_index >= 1.0) || !std::isfinite(mean_index)) {
    throw Error(Errc::invalid_argument, "medium mean_index must be >= 1");
  }
  if (!(index_fluctuation_sigma >= 0.0) || !std::isfinite(index_fluctuation_sigma)) {
    throw Error(Errc::invalid_argument, "medium index_fluctuation_sigma must be >= 0");
  }
  if (!(correlation_time >= 0.0)) {
    throw Error(Errc::invalid_argument, "medium correlation_time must be >= 0");
  }
}

ChannelModel MediumModel::as_channel(double loss_probability) const {
  return {transit_time(mean_index), transit_time(index_fluctuation_sigma), loss_probability};
}

BaselineResult einstein_sync(const MediumModel& medium, RandomStream& rng, double true_offset) {
  medium.validate();
  const double n_out = medium.mean_index + medium.index_fluctuation_sigma * rng.normal();
  const double n_back = medium.mean_index + medium.index_fluctuation_sigma * rng.normal();
  const double out = medium.transit_time(n_out);
  const double back = medium.transit_time(n_back);

  // Alice's clock is the reference; Bob's reads true time + true_offset.
  // Bob's arrival reading minus half the round trip, grouped so symmetric
  // legs cancel exactly before the offset enters.
  const double alice_return_reading = out + back;
  BaselineResult r;
  r.true_offset = true_offset;
  r.estimated_offset = true_offset + (out - 0.5 * alice_return_reading);
  r.error = r.estimated_offset - r.true_offset;
  return r;
}

}  // namespace qcs
