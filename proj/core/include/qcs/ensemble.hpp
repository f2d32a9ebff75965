#pragma once

// Labelled ensembles of pre-clock pairs and their measurement lifecycle.
//
// A pair starts entangled and idle. Alice's dual-basis measurement collapses
// it to Type-I (|pos>_A|neg>_B) or Type-II (|neg>_A|pos>_B). After that each
// party's half is an independent running clock that can be destructively
// measured exactly once.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcs/quantum.hpp"
#include "qcs/random.hpp"

namespace qcs {

/// Pair labels run 1..N and are known to both parties.
using PairLabel = std::uint64_t;

enum class PairPhase : std::uint8_t { entangled_idle, type_i, type_ii };

/// Per-half view of the lifecycle: idle -> type_i | type_ii -> consumed.
enum class Lifecycle : std::uint8_t { entangled_idle, type_i, type_ii, consumed };

const char* to_string(PairPhase phase) noexcept;
const char* to_string(Lifecycle state) noexcept;

struct PreClockPair {
  PairLabel label = 0;
  PairPhase phase = PairPhase::entangled_idle;
  double t0 = 0.0;  // collapse time; meaningful once phase != entangled_idle
  bool consumed_a = false;
  bool consumed_b = false;

  Lifecycle lifecycle(Party party) const noexcept;
};

/// Record of Alice's collapse event. alice_phase fixes the dual basis the
/// surviving qubits were projected onto.
struct CollapseRecord {
  double t0;
  BasisPhase alice_phase;
};

class Ensemble {
 public:
  Ensemble(std::size_t n_pairs, ClockSpecies species, double eta);

  std::size_t size() const noexcept { return pairs_.size(); }
  const ClockSpecies& species() const noexcept { return species_; }
  double eta() const noexcept { return eta_; }
  std::span<const PreClockPair> pairs() const noexcept { return pairs_; }
  const std::optional<CollapseRecord>& collapse() const noexcept { return collapse_; }

  /// Throws Errc::unknown_label.
  const PreClockPair& pair(PairLabel label) const;
  std::size_t index_of(PairLabel label) const;

  std::size_t remaining(Party party) const noexcept;

 private:
  friend struct EnsembleAccess;

  ClockSpecies species_;
  double eta_;
  std::vector<PreClockPair> pairs_;
  std::optional<CollapseRecord> collapse_;
};

Ensemble create_ensemble(std::size_t n_pairs, const ClockSpecies& species, double eta);

struct Partition {
  std::vector<PairLabel> type_i;
  std::vector<PairLabel> type_ii;
};

/// Alice measures every pair at t0 in her dual basis; one uniform draw per
/// pair, consumed in label order. Throws Errc::protocol_order if any pair is
/// no longer idle.
Partition alice_collapse_all(Ensemble& ensemble, double t0, BasisPhase alice_phase,
                             RandomStream& rng);

/// Exact probability that `party` reads pos at time t on its half of a
/// collapsed pair, measuring with basis phase `phi`.
double collapsed_pos_probability(const Ensemble& ensemble, PairPhase phase, Party party,
                                 BasisPhase phi, double t);

/// A selected set of pairs, walked in the order given. It only checks
/// lifecycle, never type: Bob cannot tell Type-I from Type-II locally.
class SubensembleHandle {
 public:
  SubensembleHandle() = default;

  std::size_t size() const noexcept { return indices_.size(); }
  PairPhase declared_type() const noexcept { return declared_; }
  std::vector<PairLabel> labels() const;

  /// Unconsumed pairs left for `party`.
  std::size_t available(Party party) const noexcept;

 private:
  friend SubensembleHandle select_subensemble(Ensemble&, std::span<const PairLabel>, PairPhase);
  friend struct PopulationPoint sample_batch(SubensembleHandle&, double, std::size_t, Party,
                                             BasisPhase, RandomStream&);
  friend struct EnsembleAccess;

  Ensemble* ensemble_ = nullptr;
  std::vector<std::size_t> indices_;
  PairPhase declared_ = PairPhase::type_i;
  std::size_t cursor_a_ = 0;
  std::size_t cursor_b_ = 0;
};

/// Throws Errc::unknown_label, or Errc::idle_pair when a named pair has not
/// been collapsed.
SubensembleHandle select_subensemble(Ensemble& ensemble, std::span<const PairLabel> labels,
                                     PairPhase declared_type);

struct SamplingSchedule {
  std::vector<double> times;
  std::size_t batch_size = 0;

  /// n_points times on [start, stop): start + k (stop - start)/n_points.
  static SamplingSchedule uniform(double start, double stop, std::size_t n_points,
                                  std::size_t batch_size);

  std::size_t pairs_required() const noexcept { return times.size() * batch_size; }
  /// Throws Errc::invalid_argument unless times are finite and strictly increasing.
  void validate() const;
};

struct PopulationPoint {
  double t = 0.0;
  std::uint64_t count_pos = 0;
  std::uint64_t count_neg = 0;
  std::uint64_t batch_size = 0;

  double fraction_pos() const noexcept {
    return batch_size == 0 ? 0.0 : static_cast<double>(count_pos) / static_cast<double>(batch_size);
  }
  friend bool operator==(const PopulationPoint&, const PopulationPoint&) = default;
};

struct PopulationSeries {
  std::vector<PopulationPoint> points;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  friend bool operator==(const PopulationSeries&, const PopulationSeries&) = default;
};

/// Measures `batch_size` pairs of the handle at time t (same time frame as
/// the collapse t0). Throws Errc::budget_exhausted before consuming anything
/// if the handle cannot supply the batch.
PopulationPoint sample_batch(SubensembleHandle& handle, double t, std::size_t batch_size,
                             Party party, BasisPhase phi, RandomStream& rng);

/// Runs the whole schedule; budget is checked up front.
PopulationSeries sample_population(SubensembleHandle& handle, const SamplingSchedule& schedule,
                                   Party party, BasisPhase phi, RandomStream& rng);

/// Measures `count` still-idle pairs of one party in label order. Each
/// measurement acts on the entangled state itself, so the pairs are spent
/// entirely (both halves) and leave the protocol.
PopulationPoint probe_idle(Ensemble& ensemble, std::size_t count, double t, Party party,
                           BasisPhase phi, RandomStream& rng);

/// CSV with columns t_seconds,count_pos,count_neg,batch_size. Lines starting
/// with '#' are header comments.
void write_csv(std::ostream& os, const PopulationSeries& series, const std::string& header = {});
PopulationSeries read_csv(std::istream& is);

}  // namespace qcs
