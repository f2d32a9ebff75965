#pragma once

// Configuration-driven scenario runner. A scenario is a JSON document; the
// runner validates it, executes it reproducibly and writes its artifacts to
// an output directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qcs/channel.hpp"
#include "qcs/protocol.hpp"

namespace qcs {

inline constexpr const char* kVersion = "0.1.0";

enum class ScenarioMode { single_frequency, two_frequency, time_origin, baseline_sweep };
const char* to_string(ScenarioMode mode) noexcept;

/// explicit: both parties list their phases. delta: Bob's phase is Alice's
/// minus delta. random: delta is drawn once from its own seed.
enum class PhaseLockMode { explicit_phases, delta, random };
const char* to_string(PhaseLockMode mode) noexcept;

struct SpeciesConfig {
  std::string name;
  double omega = 0.0;
  std::uint64_t n_pairs = 0;

  friend bool operator==(const SpeciesConfig&, const SpeciesConfig&) = default;
};

struct ScheduleConfig {
  double start = 0.0;
  double stop = 0.0;
  std::uint64_t n_points = 0;
  std::uint64_t batch_size = 0;

  SamplingSchedule build() const;
  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

struct PartyScenario {
  std::map<std::string, double> basis_phase;  // radians, by species
  double clock_offset = 0.0;                  // hidden truth
  ScheduleConfig schedule;

  friend bool operator==(const PartyScenario&, const PartyScenario&) = default;
};

struct PhaseLockConfig {
  PhaseLockMode mode = PhaseLockMode::delta;
  double delta = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const PhaseLockConfig&, const PhaseLockConfig&) = default;
};

struct MediumGrid {
  std::vector<double> distances;  // meters
  std::vector<double> sigmas;     // index fluctuation
  double mean_index = 1.0;
  double correlation_time = 0.0;
  std::uint64_t n_trials = 1000;  // Einstein-sync trials per cell
  std::uint64_t qcs_trials = 20;  // protocol runs per cell

  friend bool operator==(const MediumGrid&, const MediumGrid&) = default;
};

struct SweepConfig {
  std::uint64_t n_seeds = 1;
  std::vector<double> deltas;  // empty: the scenario's own phase lock
  std::uint64_t threads = 0;   // 0: hardware concurrency

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct ScenarioConfig {
  ScenarioMode mode = ScenarioMode::single_frequency;
  std::vector<SpeciesConfig> species;
  double eta = 0.0;
  double alice_collapse_time = 0.0;  // Alice's local reading
  PartyScenario alice;
  PartyScenario bob;
  PhaseLockConfig phase_lock;
  ChannelModel channel;
  std::optional<TimeOriginConfig> time_origin;
  std::optional<MediumGrid> medium;
  RunSeeds seeds;
  SweepConfig sweep;
  std::string output_dir = "out";

  friend bool operator==(const ScenarioConfig& a, const ScenarioConfig& b);
};

enum class Severity { error, warning };
const char* to_string(Severity severity) noexcept;

struct Diagnostic {
  std::string field;       // JSON path, e.g. "species[0].omega"
  std::string constraint;  // what must hold
  std::string observed;    // offending value
  Severity severity = Severity::error;
};

/// True when no diagnostic has error severity.
bool runnable(const std::vector<Diagnostic>& diagnostics) noexcept;

/// Diagnostics as a JSON array, one object per entry.
std::string diagnostics_json(const std::vector<Diagnostic>& diagnostics);

struct ParseResult {
  std::optional<ScenarioConfig> config;
  std::vector<Diagnostic> diagnostics;  // parse errors; validation is separate
};

/// Parses scenario JSON. Unknown keys and type mismatches are diagnostics.
/// In time_origin mode a missing species list is filled with clock1/clock2.
ParseResult parse_config(std::string_view json_text);
ParseResult load_config(const std::filesystem::path& path);

/// Every default spelled out; parse_config(to_json(c)) == c.
std::string to_json(const ScenarioConfig& config);

/// Empty iff the scenario is runnable (warnings excepted).
std::vector<Diagnostic> validate_config(const ScenarioConfig& config);

/// Basis phases after applying the phase-lock mode; the applied delta is
/// alice phase minus bob phase of the first species.
struct ResolvedPhases {
  std::map<std::string, double> alice;
  std::map<std::string, double> bob;
  double delta = 0.0;
};
ResolvedPhases resolve_phases(const ScenarioConfig& config);

/// Protocol inputs for one run of a (non-baseline) scenario.
ProtocolSetup make_setup(const ScenarioConfig& config);

/// Runs the protocol for the scenario and applies the matching scorer.
RunOutput execute_protocol(const ScenarioConfig& config);

enum ExitCode : int { exit_ok = 0, exit_invalid_config = 1, exit_runtime_error = 2, exit_inconclusive = 3 };

/// Runs one scenario and writes config.json, events.jsonl, series CSVs and
/// result.json (baseline mode: config.json, baseline.csv, result.json).
int run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir);

/// Runs n_seeds x deltas cells with derived quantum seeds, in parallel, and
/// writes config.json and sweep.csv ordered by cell index.
int run_sweep(const ScenarioConfig& config, const std::filesystem::path& out_dir);

/// One Einstein-sync and QCS cell of the baseline grid.
struct BaselineCell {
  double sigma = 0.0;
  double distance = 0.0;
  double rms_error_es = 0.0;
  double rms_error_qcs = 0.0;
  std::uint64_t n_trials = 0;
  std::uint64_t qcs_inconclusive = 0;
  std::vector<double> qcs_errors;  // synced runs, trial order
};

/// Einstein-sync trials reuse the same normal draws in every cell, so cells
/// differ only by sigma and distance. QCS trials use quantum seeds derived
/// from seeds.quantum, identical across cells.
std::vector<BaselineCell> run_baseline_grid(const ScenarioConfig& config);

}  // namespace qcs
