#include "qcs/protocol.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <variant>

#include "qcs/error.hpp"
#include "qcs/event_queue.hpp"

namespace qcs {

using ojson = nlohmann::ordered_json;

BasisPhase PartyConfig::phase_for(const std::string& species) const {
  const auto it = basis_phase.find(species);
  if (it == basis_phase.end()) {
    throw Error(Errc::config, std::string(to_string(id)) + " has no basis phase for species '" +
                                  species + "'");
  }
  return it->second;
}

std::string encode_message(const ClassicalMessage& message) {
  ojson j;
  j["sender"] = to_string(message.sender);
  j["species"] = message.species;
  j["labels"] = message.labels;
  j["send_time"] = message.send_time;
  j["deliver_time"] = message.deliver_time;
  return j.dump();
}

ClassicalMessage decode_message(std::string_view wire) {
  try {
    const auto j = ojson::parse(wire);
    ClassicalMessage m;
    const auto sender = j.at("sender").get<std::string>();
    if (sender == "alice") {
      m.sender = Party::alice;
    } else if (sender == "bob") {
      m.sender = Party::bob;
    } else {
      throw Error(Errc::invalid_argument, "decode_message: unknown sender '" + sender + "'");
    }
    m.species = j.at("species").get<std::string>();
    m.labels = j.at("labels").get<std::vector<PairLabel>>();
    m.send_time = j.at("send_time").get<double>();
    m.deliver_time = j.at("deliver_time").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("decode_message: ") + e.what());
  }
}

std::uint64_t label_digest(std::span<const PairLabel> labels) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (PairLabel label : labels) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (label >> (8 * byte)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::optional<ClassicalMessage> broadcast_labels(const ChannelModel& channel, Party sender,
                                                 const std::string& species,
                                                 std::vector<PairLabel> labels, double send_time,
                                                 RandomStream& rng) {
  const auto when = deliver(channel, send_time, rng);
  if (!when) return std::nullopt;
  return ClassicalMessage{sender, species, std::move(labels), send_time, *when};
}

void TimeOriginConfig::validate() const {
  if (!(omega1 > 0.0) || !std::isfinite(omega1)) {
    throw Error(Errc::config, "time origin: omega1 must be finite and > 0");
  }
  if (!(delta_omega > 0.0) || !std::isfinite(delta_omega)) {
    throw Error(Errc::config, "time origin: delta_omega must be finite and > 0");
  }
  if (!(protocol_duration > 0.0) || !std::isfinite(protocol_duration)) {
    throw Error(Errc::config, "time origin: protocol_duration must be finite and > 0");
  }
  if (!(delta_omega * protocol_duration < 0.5 * kPi)) {
    std::ostringstream os;
    os << "time origin: delta_omega * T = " << delta_omega * protocol_duration
       << " must be < pi/2";
    throw Error(Errc::config, os.str());
  }
}

const char* to_string(RunStatus status) noexcept {
  switch (status) {
    case RunStatus::synced: return "synced";
    case RunStatus::no_sync: return "no_sync";
    case RunStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

const char* to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::collapse: return "collapse";
    case EventKind::send: return "send";
    case EventKind::deliver: return "deliver";
    case EventKind::lost: return "lost";
    case EventKind::sample: return "sample";
    case EventKind::estimate: return "estimate";
    case EventKind::abort: return "abort";
  }
  return "?";
}

void Transcript::write_jsonl(std::ostream& os, const std::string& header_json) const {
  if (!header_json.empty()) os << header_json << '\n';
  for (const auto& e : events) {
    ojson j;
    j["seq"] = e.seq;
    j["event"] = to_string(e.kind);
    j["party"] = to_string(e.party);
    if (!e.species.empty()) j["species"] = e.species;
    j["true_time"] = e.true_time;
    j["local_time"] = e.local_time;
    switch (e.kind) {
      case EventKind::collapse:
        j["n_type_i"] = e.n_type_i;
        j["n_type_ii"] = e.n_type_ii;
        break;
      case EventKind::send:
      case EventKind::deliver:
      case EventKind::lost:
        j["n_labels"] = e.n_labels;
        j["labels_fnv1a"] = e.labels_fnv1a;
        if (e.deliver_time) j["deliver_time"] = *e.deliver_time;
        break;
      case EventKind::sample:
        j["count_pos"] = e.count_pos;
        j["count_neg"] = e.count_neg;
        j["batch_size"] = e.batch_size;
        break;
      case EventKind::estimate:
      case EventKind::abort:
        break;
    }
    if (e.value) j["value"] = *e.value;
    if (e.sigma) j["sigma"] = *e.sigma;
    if (!e.note.empty()) j["note"] = e.note;
    os << j.dump() << '\n';
  }
}

namespace {

enum class Mode { single_frequency, two_frequency, time_origin };

struct StartEvent {
  std::size_t lane;
};
struct DeliverEvent {
  std::size_t lane;
  ClassicalMessage message;
};
struct SampleEvent {
  Party party;
  std::size_t lane;
  std::size_t point;
};
using Payload = std::variant<StartEvent, DeliverEvent, SampleEvent>;

/// A party's wall clock. Only the orchestrator converts between frames.
struct LocalClock {
  double offset;
  double local(double true_time) const noexcept { return true_time + offset; }
  double to_true(double local_time) const noexcept { return local_time - offset; }
};

/// What each party holds for one species.
struct Lane {
  Ensemble* ensemble;
  std::string name;
  PartySchedules schedules;
  // Alice side.
  enum class AliceState { ready, sampling, done } alice_state = AliceState::ready;
  SubensembleHandle alice_handle;
  std::size_t alice_done = 0;
  // Bob side.
  enum class BobState { awaiting_labels, sampling, done, lost } bob_state = BobState::awaiting_labels;
  SubensembleHandle bob_handle;
  std::size_t bob_done = 0;
  double collapse_true_time = 0.0;
  double delivery_true_time = 0.0;

  RandomStream collapse_rng;
  RandomStream alice_rng;
  RandomStream bob_rng;
  PopulationSeries alice_series;
  PopulationSeries bob_series;
};

class Abort : public std::exception {
 public:
  explicit Abort(std::string reason) : reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }
  const char* what() const noexcept override { return reason_.c_str(); }

 private:
  std::string reason_;
};

class ProtocolRun {
 public:
  ProtocolRun(Mode mode, std::vector<Ensemble*> ensembles, const ProtocolSetup& setup,
              std::optional<TimeOriginConfig> time_origin = std::nullopt)
      : mode_(mode),
        setup_(setup),
        time_origin_(time_origin),
        alice_clock_{setup.alice.local_clock_offset},
        bob_clock_{setup.bob.local_clock_offset},
        channel_rng_(setup.seeds.channel, streams::channel) {
    setup_.channel.validate();
    for (std::size_t i = 0; i < ensembles.size(); ++i) {
      Ensemble* e = ensembles[i];
      const auto& name = e->species().name();
      const auto it = setup.schedules.find(name);
      if (it == setup.schedules.end()) {
        throw Error(Errc::config, "no sampling schedules for species '" + name + "'");
      }
      it->second.alice.validate();
      it->second.bob.validate();
      for (double t : it->second.alice.times) {
        if (t < setup.alice_start) {
          throw Error(Errc::schedule_mismatch,
                      "alice schedule for '" + name + "' starts before her collapse");
        }
      }
      lanes_.push_back(Lane{e,
                            name,
                            it->second,
                            Lane::AliceState::ready,
                            {},
                            0,
                            Lane::BobState::awaiting_labels,
                            {},
                            0,
                            0.0,
                            0.0,
                            RandomStream(setup.seeds.quantum, streams::collapse + i),
                            RandomStream(setup.seeds.quantum, streams::alice_sampling + i),
                            RandomStream(setup.seeds.quantum, streams::bob_sampling + i),
                            {},
                            {}});
    }
  }

  RunOutput execute() {
    const double start = alice_clock_.to_true(setup_.alice_start);
    for (std::size_t i = 0; i < lanes_.size(); ++i) queue_.push(start, StartEvent{i});

    std::optional<std::string> abort_reason;
    double now = start;
    try {
      while (!queue_.empty()) {
        auto entry = queue_.pop();
        now = entry.time;
        current_seq_ = entry.seq;
        std::visit([&](auto& ev) { handle(now, ev); }, entry.payload);
      }
    } catch (const Abort& a) {
      abort_reason = a.reason();
    }

    RunOutput out;
    if (abort_reason) {
      record_abort(now, *abort_reason);
      out.result.status = RunStatus::inconclusive;
      out.result.reason = *abort_reason;
    } else if (const auto lost = first_lost()) {
      out.result.status = RunStatus::no_sync;
      out.result.reason = "label message for '" + *lost + "' was lost; Bob has no clock";
    } else {
      estimate(now, out.result);
    }
    for (auto& lane : lanes_) {
      SpeciesResult* sr = nullptr;
      for (auto& s : out.result.species) {
        if (s.species == lane.name) sr = &s;
      }
      if (sr == nullptr) {
        out.result.species.push_back({lane.name, lane.ensemble->species().omega(), {}, {}});
      }
      out.alice_series[lane.name] = lane.alice_series;
      out.bob_series[lane.name] = lane.bob_series;
    }
    out.transcript = std::move(transcript_);
    return out;
  }

 private:
  TranscriptEvent& record(double true_time, EventKind kind, Party party, const std::string& species) {
    TranscriptEvent e;
    e.seq = transcript_.events.size();
    e.true_time = true_time;
    e.kind = kind;
    e.party = party;
    e.species = species;
    e.local_time = (party == Party::alice ? alice_clock_ : bob_clock_).local(true_time);
    transcript_.events.push_back(std::move(e));
    return transcript_.events.back();
  }

  void record_abort(double true_time, const std::string& reason) {
    auto& e = record(true_time, EventKind::abort, Party::bob, {});
    e.note = reason;
  }

  std::optional<std::string> first_lost() const {
    for (const auto& lane : lanes_) {
      if (lane.bob_state == Lane::BobState::lost) return lane.name;
    }
    return std::nullopt;
  }

  // Alice: collapse, keep Type-I, broadcast labels, schedule her sampling.
  void handle(double now, const StartEvent& ev) {
    Lane& lane = lanes_[ev.lane];
    const BasisPhase phi = setup_.alice.phase_for(lane.name);
    Partition part = alice_collapse_all(*lane.ensemble, now, phi, lane.collapse_rng);
    lane.collapse_true_time = now;
    {
      auto& e = record(now, EventKind::collapse, Party::alice, lane.name);
      e.n_type_i = part.type_i.size();
      e.n_type_ii = part.type_ii.size();
    }

    lane.alice_handle = select_subensemble(*lane.ensemble, part.type_i, PairPhase::type_i);
    if (lane.alice_handle.size() < lane.schedules.alice.pairs_required()) {
      throw Abort("alice Type-I subensemble of '" + lane.name + "' (" +
                  std::to_string(lane.alice_handle.size()) + " pairs) cannot cover her schedule (" +
                  std::to_string(lane.schedules.alice.pairs_required()) + ")");
    }

    const std::uint64_t digest = label_digest(part.type_i);
    const std::size_t n_labels = part.type_i.size();
    auto msg = broadcast_labels(setup_.channel, Party::alice, lane.name, std::move(part.type_i), now,
                                channel_rng_);
    {
      auto& e = record(now, msg ? EventKind::send : EventKind::lost, Party::alice, lane.name);
      e.n_labels = n_labels;
      e.labels_fnv1a = digest;
      if (msg) e.deliver_time = msg->deliver_time;
    }
    if (msg) {
      const double when = msg->deliver_time;
      queue_.push(when, DeliverEvent{ev.lane, std::move(*msg)});
    } else {
      lane.bob_state = Lane::BobState::lost;
    }

    lane.alice_state = Lane::AliceState::sampling;
    for (std::size_t k = 0; k < lane.schedules.alice.times.size(); ++k) {
      queue_.push(alice_clock_.to_true(lane.schedules.alice.times[k]),
                  SampleEvent{Party::alice, ev.lane, k});
    }
    if (lane.schedules.alice.times.empty()) lane.alice_state = Lane::AliceState::done;
  }

  // Bob: labels arrived. Type-II is the complement of Alice's Type-I list
  // within the shared label range 1..N.
  void handle(double now, const DeliverEvent& ev) {
    Lane& lane = lanes_[ev.lane];
    lane.delivery_true_time = now;
    {
      auto& e = record(now, EventKind::deliver, Party::bob, lane.name);
      e.n_labels = ev.message.labels.size();
      e.labels_fnv1a = label_digest(ev.message.labels);
    }
    if (time_origin_ && now - lane.collapse_true_time > time_origin_->protocol_duration) {
      throw Abort("labels for '" + lane.name + "' arrived after the configured protocol duration");
    }

    const std::size_t n = lane.ensemble->size();
    std::vector<char> is_type_i(n + 1, 0);
    for (PairLabel label : ev.message.labels) {
      if (label == 0 || label > n) {
        throw Abort("label message for '" + lane.name + "' names an unknown pair");
      }
      is_type_i[label] = 1;
    }
    std::vector<PairLabel> type_ii;
    type_ii.reserve(n - ev.message.labels.size());
    for (PairLabel label = 1; label <= n; ++label) {
      if (!is_type_i[label]) type_ii.push_back(label);
    }
    lane.bob_handle = select_subensemble(*lane.ensemble, type_ii, PairPhase::type_ii);
    if (lane.bob_handle.size() < lane.schedules.bob.pairs_required()) {
      throw Abort("bob Type-II subensemble of '" + lane.name + "' (" +
                  std::to_string(lane.bob_handle.size()) + " pairs) cannot cover his schedule (" +
                  std::to_string(lane.schedules.bob.pairs_required()) + ")");
    }

    const double local_now = bob_clock_.local(now);
    for (std::size_t k = 0; k < lane.schedules.bob.times.size(); ++k) {
      const double t_local = lane.schedules.bob.times[k];
      if (t_local < local_now) {
        throw Abort("bob's schedule for '" + lane.name +
                    "' starts before the label message arrived");
      }
      queue_.push(bob_clock_.to_true(t_local), SampleEvent{Party::bob, ev.lane, k});
    }
    lane.bob_state = lane.schedules.bob.times.empty() ? Lane::BobState::done
                                                      : Lane::BobState::sampling;
  }

  void handle(double now, const SampleEvent& ev) {
    Lane& lane = lanes_[ev.lane];
    const bool alice = ev.party == Party::alice;
    const SamplingSchedule& schedule = alice ? lane.schedules.alice : lane.schedules.bob;
    const PartyConfig& cfg = alice ? setup_.alice : setup_.bob;
    SubensembleHandle& handle = alice ? lane.alice_handle : lane.bob_handle;
    RandomStream& rng = alice ? lane.alice_rng : lane.bob_rng;

    PopulationPoint point;
    try {
      point = sample_batch(handle, now, schedule.batch_size, ev.party, cfg.phase_for(lane.name), rng);
    } catch (const Error& err) {
      if (err.code() == Errc::budget_exhausted) throw Abort(err.what());
      throw;
    }
    point.t = schedule.times[ev.point];
    (alice ? lane.alice_series : lane.bob_series).points.push_back(point);

    auto& e = record(now, EventKind::sample, ev.party, lane.name);
    e.count_pos = point.count_pos;
    e.count_neg = point.count_neg;
    e.batch_size = point.batch_size;

    std::size_t& done = alice ? lane.alice_done : lane.bob_done;
    if (++done == schedule.times.size()) {
      if (alice) {
        lane.alice_state = Lane::AliceState::done;
      } else {
        lane.bob_state = Lane::BobState::done;
      }
    }
  }

  void record_estimate(double now, Party party, const std::string& species, const char* what,
                       double value, double sigma) {
    auto& e = record(now, EventKind::estimate, party, species);
    e.value = value;
    e.sigma = sigma;
    e.note = what;
  }

  // Each party fits only its own series.
  void estimate(double now, SyncResult& result) {
    try {
      for (auto& lane : lanes_) {
        const ClockSpecies& species = lane.ensemble->species();
        SpeciesResult sr{lane.name, species.omega(), {}, {}};
        sr.alice = estimate_phase(lane.alice_series, species);
        record_estimate(now, Party::alice, lane.name, "fringe_phase", sr.alice->phase,
                        sr.alice->sigma);
        sr.bob = estimate_phase(lane.bob_series, species);
        record_estimate(now, Party::bob, lane.name, "fringe_phase", sr.bob->phase, sr.bob->sigma);
        result.species.push_back(std::move(sr));
      }

      if (mode_ != Mode::single_frequency) {
        const Lane& l1 = lanes_[0];
        const Lane& l2 = lanes_[1];
        const double w1 = l1.ensemble->species().omega();
        const double w2 = l2.ensemble->species().omega();
        const BeatSeries beats_a = beat_difference(l1.alice_series, l2.alice_series);
        const BeatSeries beats_b = beat_difference(l1.bob_series, l2.bob_series);
        result.envelope_a = envelope_phase(beats_a, w1, w2);
        record_estimate(now, Party::alice, {}, "envelope_phase", result.envelope_a->phase,
                        result.envelope_a->sigma);
        result.envelope_b = envelope_phase(beats_b, w1, w2);
        record_estimate(now, Party::bob, {}, "envelope_phase", result.envelope_b->phase,
                        result.envelope_b->sigma);

        if (mode_ == Mode::time_origin) {
          result.t_origin_a = first_envelope_maximum(*result.envelope_a, w1, w2,
                                                     beats_a.times.front(), beats_a.times.back());
          record_estimate(now, Party::alice, {}, "time_origin", result.t_origin_a->t,
                          result.t_origin_a->sigma);
          result.t_origin_b = first_envelope_maximum(*result.envelope_b, w1, w2,
                                                     beats_b.times.front(), beats_b.times.back());
          record_estimate(now, Party::bob, {}, "time_origin", result.t_origin_b->t,
                          result.t_origin_b->sigma);
        }
      }
      result.status = RunStatus::synced;
    } catch (const Error& err) {
      const Errc c = err.code();
      if (c == Errc::rank_deficient || c == Errc::inconclusive || c == Errc::under_resolved ||
          c == Errc::invalid_series) {
        record_abort(now, err.what());
        result = SyncResult{};
        result.status = RunStatus::inconclusive;
        result.reason = err.what();
        return;
      }
      throw;
    }
  }

  Mode mode_;
  ProtocolSetup setup_;
  std::optional<TimeOriginConfig> time_origin_;
  LocalClock alice_clock_;
  LocalClock bob_clock_;
  RandomStream channel_rng_;
  std::vector<Lane> lanes_;
  EventQueue<Payload> queue_;
  Transcript transcript_;
  std::uint64_t current_seq_ = 0;
};

void require_idle(const Ensemble& e) {
  if (e.collapse()) {
    throw Error(Errc::protocol_order, "ensemble for '" + e.species().name() + "' is not idle");
  }
}

void check_two_frequency(const Ensemble& first, const Ensemble& second, const ProtocolSetup& setup) {
  if (first.species().omega() == second.species().omega()) {
    throw Error(Errc::species_collision, "two-frequency run needs distinct frequencies");
  }
  if (first.species().name() == second.species().name()) {
    throw Error(Errc::species_collision, "two-frequency run needs distinct species names");
  }
  const auto s1 = setup.schedules.find(first.species().name());
  const auto s2 = setup.schedules.find(second.species().name());
  if (s1 == setup.schedules.end() || s2 == setup.schedules.end()) {
    throw Error(Errc::config, "two-frequency run needs schedules for both species");
  }
  if (s1->second.alice.times != s2->second.alice.times ||
      s1->second.bob.times != s2->second.bob.times) {
    throw Error(Errc::schedule_mismatch,
                "two-frequency run needs identical time grids for both species");
  }
  const auto offset = [&](const std::string& name) {
    return setup.alice.phase_for(name).radians() - setup.bob.phase_for(name).radians();
  };
  const double spread = wrap_signed_pi(offset(first.species().name()) - offset(second.species().name()));
  if (std::abs(spread) > kInputTolerance) {
    throw Error(Errc::config, "both species must share one phase-lock offset between the parties");
  }
}

double wrap_to_period(double x, double period) {
  return period * wrap_signed_pi(kTwoPi * x / period) / kTwoPi;
}

}  // namespace

RunOutput run_single_frequency(Ensemble& ensemble, const ProtocolSetup& setup) {
  require_idle(ensemble);
  ProtocolRun run(Mode::single_frequency, {&ensemble}, setup);
  return run.execute();
}

RunOutput run_two_frequency(Ensemble& first, Ensemble& second, const ProtocolSetup& setup) {
  require_idle(first);
  require_idle(second);
  check_two_frequency(first, second, setup);
  ProtocolRun run(Mode::two_frequency, {&first, &second}, setup);
  return run.execute();
}

RunOutput establish_time_origin(const TimeOriginConfig& config, Ensemble& first, Ensemble& second,
                                const ProtocolSetup& setup) {
  config.validate();
  const auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::abs(b); };
  if (!near(first.species().omega(), config.omega1) ||
      !near(second.species().omega(), config.omega1 + config.delta_omega)) {
    throw Error(Errc::config, "time origin: ensembles must use omega1 and omega1 + delta_omega");
  }
  require_idle(first);
  require_idle(second);
  check_two_frequency(first, second, setup);
  ProtocolRun run(Mode::time_origin, {&first, &second}, setup, config);
  return run.execute();
}

void score_single_frequency(SyncResult& result, const ProtocolSetup& setup) {
  result.sync_error.reset();
  if (result.status != RunStatus::synced || result.species.empty()) return;
  const auto& s = result.species.front();
  if (!s.alice || !s.bob) return;
  const double period = kTwoPi / s.omega;
  // Bob's fringe leads Alice's by omega (off_a - off_b) + delta.
  const double inferred = -wrap_signed_pi(s.bob->phase - s.alice->phase) / s.omega;
  const double truth = setup.bob.local_clock_offset - setup.alice.local_clock_offset;
  result.sync_error = wrap_to_period(inferred - truth, period);
}

void score_two_frequency(SyncResult& result, const ProtocolSetup& setup) {
  result.sync_error.reset();
  if (result.status != RunStatus::synced || result.species.size() < 2) return;
  if (!result.envelope_a || !result.envelope_b) return;
  const double half_diff = 0.5 * (result.species[0].omega - result.species[1].omega);
  const double period = kPi / std::abs(half_diff);
  // Envelope phases live in [0, pi); their difference is taken modulo pi.
  double d = std::fmod(result.envelope_b->phase - result.envelope_a->phase, kPi);
  if (d >= 0.5 * kPi) d -= kPi;
  if (d < -0.5 * kPi) d += kPi;
  const double inferred = -d / half_diff;
  const double truth = setup.bob.local_clock_offset - setup.alice.local_clock_offset;
  result.sync_error = wrap_to_period(inferred - truth, period);
}

void score_time_origin(SyncResult& result, const ProtocolSetup& setup) {
  result.sync_error.reset();
  if (result.status != RunStatus::synced || !result.t_origin_a || !result.t_origin_b) return;
  const double a_true = result.t_origin_a->t - setup.alice.local_clock_offset;
  const double b_true = result.t_origin_b->t - setup.bob.local_clock_offset;
  result.sync_error = b_true - a_true;
}

}  // namespace qcs
