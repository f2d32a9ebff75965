#include "qcs/ensemble.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "qcs/error.hpp"
#include "qcs/text.hpp"

namespace qcs {

struct EnsembleAccess {
  static std::vector<PreClockPair>& pairs(Ensemble& e) { return e.pairs_; }
  static std::optional<CollapseRecord>& collapse(Ensemble& e) { return e.collapse_; }
};

namespace {

bool& consumed_flag(PreClockPair& p, Party party) {
  return party == Party::alice ? p.consumed_a : p.consumed_b;
}

}  // namespace

const char* to_string(PairPhase phase) noexcept {
  switch (phase) {
    case PairPhase::entangled_idle: return "entangled_idle";
    case PairPhase::type_i: return "type_i";
    case PairPhase::type_ii: return "type_ii";
  }
  return "?";
}

const char* to_string(Lifecycle state) noexcept {
  switch (state) {
    case Lifecycle::entangled_idle: return "entangled_idle";
    case Lifecycle::type_i: return "type_i";
    case Lifecycle::type_ii: return "type_ii";
    case Lifecycle::consumed: return "consumed";
  }
  return "?";
}

Lifecycle PreClockPair::lifecycle(Party party) const noexcept {
  if (party == Party::alice ? consumed_a : consumed_b) return Lifecycle::consumed;
  switch (phase) {
    case PairPhase::entangled_idle: return Lifecycle::entangled_idle;
    case PairPhase::type_i: return Lifecycle::type_i;
    case PairPhase::type_ii: return Lifecycle::type_ii;
  }
  return Lifecycle::consumed;
}

Ensemble::Ensemble(std::size_t n_pairs, ClockSpecies species, double eta)
    : species_(std::move(species)), eta_(eta) {
  if (n_pairs == 0) throw Error(Errc::invalid_argument, "ensemble needs at least one pair");
  if (!std::isfinite(eta)) throw Error(Errc::invalid_argument, "eta must be finite");
  pairs_.resize(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) pairs_[i].label = static_cast<PairLabel>(i + 1);
}

std::size_t Ensemble::index_of(PairLabel label) const {
  if (label == 0 || label > pairs_.size()) {
    throw Error(Errc::unknown_label, "unknown pair label " + std::to_string(label));
  }
  return static_cast<std::size_t>(label - 1);
}

const PreClockPair& Ensemble::pair(PairLabel label) const { return pairs_[index_of(label)]; }

std::size_t Ensemble::remaining(Party party) const noexcept {
  std::size_t n = 0;
  for (const auto& p : pairs_) {
    if (!(party == Party::alice ? p.consumed_a : p.consumed_b)) ++n;
  }
  return n;
}

Ensemble create_ensemble(std::size_t n_pairs, const ClockSpecies& species, double eta) {
  return Ensemble(n_pairs, species, eta);
}

Partition alice_collapse_all(Ensemble& ensemble, double t0, BasisPhase alice_phase,
                             RandomStream& rng) {
  if (!std::isfinite(t0)) throw Error(Errc::invalid_argument, "collapse time must be finite");
  auto& pairs = EnsembleAccess::pairs(ensemble);
  for (const auto& p : pairs) {
    if (p.phase != PairPhase::entangled_idle || p.consumed_a || p.consumed_b) {
      throw Error(Errc::protocol_order,
                  "alice_collapse_all: pair " + std::to_string(p.label) + " is not idle");
    }
  }

  // Identical local evolution leaves the pair state untouched, so every
  // pair is still exactly singlet(eta) at t0.
  const TwoQubitState idle = singlet_state(ensemble.eta());
  Partition out;
  out.type_i.reserve(pairs.size() / 2 + 1);
  out.type_ii.reserve(pairs.size() / 2 + 1);
  for (auto& p : pairs) {
    const DualMeasurement m = measure_dual(idle, Party::alice, alice_phase, rng.uniform());
    p.t0 = t0;
    if (m.outcome == DualOutcome::pos) {
      p.phase = PairPhase::type_i;
      out.type_i.push_back(p.label);
    } else {
      p.phase = PairPhase::type_ii;
      out.type_ii.push_back(p.label);
    }
  }
  EnsembleAccess::collapse(ensemble) = CollapseRecord{t0, alice_phase};
  return out;
}

double collapsed_pos_probability(const Ensemble& ensemble, PairPhase phase, Party party,
                                 BasisPhase phi, double t) {
  const auto& record = ensemble.collapse();
  if (!record || phase == PairPhase::entangled_idle) {
    throw Error(Errc::idle_pair, "pos probability requested for an idle pair");
  }
  // After Alice's pos (neg) outcome her qubit is |pos_a> (|neg_a>) and Bob's
  // is |neg_{a-eta}> (|pos_{a-eta}>), where a is Alice's basis phase. A
  // qubit in |pos_theta> measured at elapsed tau in basis phi reads pos with
  // probability (1 + cos(Omega tau + theta - phi))/2; |neg_theta> flips the sign.
  const double theta = party == Party::alice ? record->alice_phase.radians()
                                             : record->alice_phase.radians() - ensemble.eta();
  const bool holds_pos = (party == Party::alice) == (phase == PairPhase::type_i);
  const double c = std::cos(ensemble.species().omega() * (t - record->t0) + theta - phi.radians());
  return 0.5 * (1.0 + (holds_pos ? c : -c));
}

std::vector<PairLabel> SubensembleHandle::labels() const {
  std::vector<PairLabel> out;
  out.reserve(indices_.size());
  for (std::size_t i : indices_) out.push_back(static_cast<PairLabel>(i + 1));
  return out;
}

std::size_t SubensembleHandle::available(Party party) const noexcept {
  if (ensemble_ == nullptr) return 0;
  const auto pairs = ensemble_->pairs();
  const std::size_t start = party == Party::alice ? cursor_a_ : cursor_b_;
  std::size_t n = 0;
  for (std::size_t k = start; k < indices_.size(); ++k) {
    const auto& p = pairs[indices_[k]];
    if (!(party == Party::alice ? p.consumed_a : p.consumed_b)) ++n;
  }
  return n;
}

SubensembleHandle select_subensemble(Ensemble& ensemble, std::span<const PairLabel> labels,
                                     PairPhase declared_type) {
  SubensembleHandle h;
  h.ensemble_ = &ensemble;
  h.declared_ = declared_type;
  h.indices_.reserve(labels.size());
  for (PairLabel label : labels) {
    const std::size_t idx = ensemble.index_of(label);
    if (ensemble.pairs()[idx].phase == PairPhase::entangled_idle) {
      throw Error(Errc::idle_pair,
                  "select_subensemble: pair " + std::to_string(label) + " is still idle");
    }
    h.indices_.push_back(idx);
  }
  return h;
}

SamplingSchedule SamplingSchedule::uniform(double start, double stop, std::size_t n_points,
                                           std::size_t batch_size) {
  SamplingSchedule s;
  s.batch_size = batch_size;
  s.times.reserve(n_points);
  const double step = n_points == 0 ? 0.0 : (stop - start) / static_cast<double>(n_points);
  for (std::size_t k = 0; k < n_points; ++k) s.times.push_back(start + static_cast<double>(k) * step);
  return s;
}

void SamplingSchedule::validate() const {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k])) throw Error(Errc::invalid_argument, "schedule time not finite");
    if (k > 0 && !(times[k] > times[k - 1])) {
      throw Error(Errc::invalid_argument, "schedule times must be strictly increasing");
    }
  }
}

PopulationPoint sample_batch(SubensembleHandle& handle, double t, std::size_t batch_size,
                             Party party, BasisPhase phi, RandomStream& rng) {
  if (batch_size == 0) return {t, 0, 0, 0};
  if (handle.ensemble_ == nullptr) {
    throw Error(Errc::budget_exhausted, "sample_batch: empty handle");
  }
  auto& ensemble = *handle.ensemble_;
  auto& pairs = EnsembleAccess::pairs(ensemble);
  std::size_t& cursor = party == Party::alice ? handle.cursor_a_ : handle.cursor_b_;

  // Reserve the batch first so a short handle consumes nothing.
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);
  std::size_t scan = cursor;
  while (batch.size() < batch_size && scan < handle.indices_.size()) {
    const std::size_t idx = handle.indices_[scan++];
    if (!consumed_flag(pairs[idx], party)) batch.push_back(idx);
  }
  if (batch.size() < batch_size) {
    std::ostringstream os;
    os << "sample_batch: " << batch_size << " pairs requested, " << batch.size()
       << " available";
    throw Error(Errc::budget_exhausted, os.str());
  }
  cursor = scan;

  // Both collapse types share t0, so two probabilities cover the batch.
  const double p_type_i = collapsed_pos_probability(ensemble, PairPhase::type_i, party, phi, t);
  const double p_type_ii = collapsed_pos_probability(ensemble, PairPhase::type_ii, party, phi, t);

  PopulationPoint point{t, 0, 0, static_cast<std::uint64_t>(batch_size)};
  for (std::size_t idx : batch) {
    PreClockPair& p = pairs[idx];
    const double p_pos = p.phase == PairPhase::type_i ? p_type_i : p_type_ii;
    if (rng.uniform() < p_pos) {
      ++point.count_pos;
    } else {
      ++point.count_neg;
    }
    consumed_flag(p, party) = true;
  }
  return point;
}

PopulationSeries sample_population(SubensembleHandle& handle, const SamplingSchedule& schedule,
                                   Party party, BasisPhase phi, RandomStream& rng) {
  schedule.validate();
  if (handle.available(party) < schedule.pairs_required()) {
    std::ostringstream os;
    os << "sample_population: schedule needs " << schedule.pairs_required() << " pairs, "
       << handle.available(party) << " available";
    throw Error(Errc::budget_exhausted, os.str());
  }
  PopulationSeries series;
  series.points.reserve(schedule.times.size());
  for (double t : schedule.times) {
    series.points.push_back(sample_batch(handle, t, schedule.batch_size, party, phi, rng));
  }
  return series;
}

PopulationPoint probe_idle(Ensemble& ensemble, std::size_t count, double t, Party party,
                           BasisPhase phi, RandomStream& rng) {
  auto& pairs = EnsembleAccess::pairs(ensemble);
  std::size_t idle = 0;
  for (const auto& p : pairs) {
    if (p.phase == PairPhase::entangled_idle && !p.consumed_a && !p.consumed_b) ++idle;
  }
  if (idle < count) throw Error(Errc::budget_exhausted, "probe_idle: not enough idle pairs");

  // Stationary under identical free evolution, so the state at t is the
  // prepared one regardless of t.
  const TwoQubitState state = singlet_state(ensemble.eta());
  PopulationPoint point{t, 0, 0, static_cast<std::uint64_t>(count)};
  std::size_t taken = 0;
  for (auto& p : pairs) {
    if (taken == count) break;
    if (p.phase != PairPhase::entangled_idle || p.consumed_a || p.consumed_b) continue;
    const DualMeasurement m = measure_dual(state, party, phi, rng.uniform());
    if (m.outcome == DualOutcome::pos) {
      ++point.count_pos;
    } else {
      ++point.count_neg;
    }
    p.consumed_a = true;
    p.consumed_b = true;
    ++taken;
  }
  return point;
}

void write_csv(std::ostream& os, const PopulationSeries& series, const std::string& header) {
  if (!header.empty()) os << "# " << header << '\n';
  os << "t_seconds,count_pos,count_neg,batch_size\n";
  for (const auto& p : series.points) {
    os << shortest(p.t) << ',' << p.count_pos << ',' << p.count_neg << ',' << p.batch_size << '\n';
  }
}

namespace {

template <typename T>
T parse_field(std::string_view text, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(Errc::invalid_series, "population CSV: bad field '" + std::string(text) +
                                          "' on line " + std::to_string(line_no));
  }
  return value;
}

}  // namespace

PopulationSeries read_csv(std::istream& is) {
  PopulationSeries series;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!saw_header) {
      if (line != "t_seconds,count_pos,count_neg,batch_size") {
        throw Error(Errc::invalid_series, "population CSV: unexpected header '" + line + "'");
      }
      saw_header = true;
      continue;
    }
    std::string_view rest(line);
    std::array<std::string_view, 4> fields;
    for (std::size_t f = 0; f < 4; ++f) {
      const auto comma = rest.find(',');
      if ((f < 3) == (comma == std::string_view::npos)) {
        throw Error(Errc::invalid_series, "population CSV: wrong column count on line " +
                                              std::to_string(line_no));
      }
      fields[f] = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    PopulationPoint p;
    p.t = parse_field<double>(fields[0], line_no);
    p.count_pos = parse_field<std::uint64_t>(fields[1], line_no);
    p.count_neg = parse_field<std::uint64_t>(fields[2], line_no);
    p.batch_size = parse_field<std::uint64_t>(fields[3], line_no);
    if (p.count_pos + p.count_neg != p.batch_size) {
      throw Error(Errc::invalid_series, "population CSV: counts do not sum to batch_size on line " +
                                            std::to_string(line_no));
    }
    series.points.push_back(p);
  }
  return series;
}

}  // namespace qcs
