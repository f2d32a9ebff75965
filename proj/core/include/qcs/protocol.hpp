#pragma once

// Alice/Bob protocol orchestration over a classical channel.
//
// Runs are driven by a single-threaded event loop in true (common rest frame)
// time. Each party only ever sees its own local clock readings, its own
// configuration, and the messages it receives. Hidden truth (clock offsets)
// is read only by the scoring functions at the bottom of this header.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qcs/channel.hpp"
#include "qcs/ensemble.hpp"
#include "qcs/estimation.hpp"
#include "qcs/quantum.hpp"
#include "qcs/random.hpp"

namespace qcs {

struct PartyConfig {
  Party id = Party::alice;
  /// Locked dual-basis origin per species name.
  std::map<std::string, BasisPhase> basis_phase;
  /// Hidden truth: local reading = true time + local_clock_offset.
  double local_clock_offset = 0.0;

  /// Throws Errc::config when the species has no configured phase.
  BasisPhase phase_for(const std::string& species) const;
};

/// Alice's label broadcast. Carries labels only.
struct ClassicalMessage {
  Party sender = Party::alice;
  std::string species;
  std::vector<PairLabel> labels;
  double send_time = 0.0;
  double deliver_time = 0.0;

  friend bool operator==(const ClassicalMessage&, const ClassicalMessage&) = default;
};

/// Single-line JSON wire form; decode(encode(m)) == m.
std::string encode_message(const ClassicalMessage& message);
ClassicalMessage decode_message(std::string_view wire);

/// FNV-1a over the label list, used to reference payloads in transcripts.
std::uint64_t label_digest(std::span<const PairLabel> labels) noexcept;

/// Sends Alice's Type-I labels over the channel. Returns the message with its
/// delivery time, or nullopt if the channel lost it.
std::optional<ClassicalMessage> broadcast_labels(const ChannelModel& channel, Party sender,
                                                 const std::string& species,
                                                 std::vector<PairLabel> labels, double send_time,
                                                 RandomStream& rng);

struct TimeOriginConfig {
  double omega1 = 0.0;             // rad/s
  double delta_omega = 0.0;        // rad/s
  double protocol_duration = 0.0;  // seconds, T

  /// Requires delta_omega * T < pi/2 (strict). Throws Errc::config.
  void validate() const;
  ClockSpecies first_species() const { return ClockSpecies("clock1", omega1); }
  ClockSpecies second_species() const { return ClockSpecies("clock2", omega1 + delta_omega); }
};

enum class RunStatus { synced, no_sync, inconclusive };
const char* to_string(RunStatus status) noexcept;

struct SpeciesResult {
  std::string species;
  double omega = 0.0;
  std::optional<PhaseEstimate> alice;
  std::optional<PhaseEstimate> bob;
};

struct SyncResult {
  RunStatus status = RunStatus::inconclusive;
  std::string reason;
  std::vector<SpeciesResult> species;
  std::optional<PhaseEstimate> envelope_a;
  std::optional<PhaseEstimate> envelope_b;
  std::optional<TimeEstimate> t_origin_a;  // Alice's local reading
  std::optional<TimeEstimate> t_origin_b;  // Bob's local reading
  /// Filled only by the score_* functions, and only for synced runs.
  std::optional<double> sync_error;
};

/// Sampling schedules in each party's local clock readings.
struct PartySchedules {
  SamplingSchedule alice;
  SamplingSchedule bob;
};

struct RunSeeds {
  std::uint64_t quantum = 0;
  std::uint64_t channel = 0;
};

struct ProtocolSetup {
  PartyConfig alice{Party::alice, {}, 0.0};
  PartyConfig bob{Party::bob, {}, 0.0};
  ChannelModel channel;
  /// Per species name.
  std::map<std::string, PartySchedules> schedules;
  RunSeeds seeds;
  /// Alice's local reading at which she collapses every ensemble.
  double alice_start = 0.0;
};

enum class EventKind { collapse, send, deliver, lost, sample, estimate, abort };
const char* to_string(EventKind kind) noexcept;

struct TranscriptEvent {
  std::uint64_t seq = 0;
  double true_time = 0.0;
  EventKind kind = EventKind::collapse;
  Party party = Party::alice;
  std::string species;
  double local_time = 0.0;
  // collapse
  std::uint64_t n_type_i = 0;
  std::uint64_t n_type_ii = 0;
  // send / deliver
  std::uint64_t n_labels = 0;
  std::uint64_t labels_fnv1a = 0;
  std::optional<double> deliver_time;
  // sample
  std::uint64_t count_pos = 0;
  std::uint64_t count_neg = 0;
  std::uint64_t batch_size = 0;
  // estimate / abort
  std::optional<double> value;
  std::optional<double> sigma;
  std::string note;
};

struct Transcript {
  std::vector<TranscriptEvent> events;

  /// One JSON object per line; an optional header object goes first.
  void write_jsonl(std::ostream& os, const std::string& header_json = {}) const;
};

struct RunOutput {
  SyncResult result;
  Transcript transcript;
  std::map<std::string, PopulationSeries> alice_series;  // by species, local times
  std::map<std::string, PopulationSeries> bob_series;
};

/// Single-frequency protocol: collapse, Alice samples Type-I, broadcasts the
/// labels, Bob samples the complement after delivery, both fit phases.
RunOutput run_single_frequency(Ensemble& ensemble, const ProtocolSetup& setup);

/// Two species with one shared phase-lock offset. Both parties also fit the
/// beat envelope of their two fringes.
/// Throws Errc::species_collision, Errc::schedule_mismatch, Errc::config.
RunOutput run_two_frequency(Ensemble& first, Ensemble& second, const ProtocolSetup& setup);

/// Two-frequency run with omega1 and omega1 + delta_omega, then each party
/// reads the first envelope maximum as the common time origin. The run is
/// inconclusive if the last label delivery comes later than T after collapse.
RunOutput establish_time_origin(const TimeOriginConfig& config, Ensemble& first, Ensemble& second,
                                const ProtocolSetup& setup);

// Scoring harness: reads hidden offsets and fills SyncResult::sync_error
// (seconds, Bob's inferred offset minus his true offset relative to Alice).

/// Bob's offset inferred from the fringe phase difference, modulo one period.
void score_single_frequency(SyncResult& result, const ProtocolSetup& setup);
/// Bob's offset inferred from the envelope phase difference, modulo one
/// envelope period 2 pi / |w1 - w2|.
void score_two_frequency(SyncResult& result, const ProtocolSetup& setup);
/// Difference of the two time origins expressed in true time.
void score_time_origin(SyncResult& result, const ProtocolSetup& setup);

}  // namespace qcs
