#include "qcs/scenario.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "qcs/error.hpp"
#include "qcs/stats.hpp"
#include "qcs/text.hpp"

namespace qcs {

using ojson = nlohmann::ordered_json;

const char* to_string(ScenarioMode mode) noexcept {
  switch (mode) {
    case ScenarioMode::single_frequency: return "single_frequency";
    case ScenarioMode::two_frequency: return "two_frequency";
    case ScenarioMode::time_origin: return "time_origin";
    case ScenarioMode::baseline_sweep: return "baseline_sweep";
  }
  return "?";
}

const char* to_string(PhaseLockMode mode) noexcept {
  switch (mode) {
    case PhaseLockMode::explicit_phases: return "explicit";
    case PhaseLockMode::delta: return "delta";
    case PhaseLockMode::random: return "random";
  }
  return "?";
}

const char* to_string(Severity severity) noexcept {
  return severity == Severity::error ? "error" : "warning";
}

SamplingSchedule ScheduleConfig::build() const {
  return SamplingSchedule::uniform(start, stop, static_cast<std::size_t>(n_points),
                                   static_cast<std::size_t>(batch_size));
}

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
  const auto to_tuple = [](const TimeOriginConfig& t) {
    return std::tuple(t.omega1, t.delta_omega, t.protocol_duration);
  };
  const bool same_to = a.time_origin.has_value() == b.time_origin.has_value() &&
                       (!a.time_origin || to_tuple(*a.time_origin) == to_tuple(*b.time_origin));
  const auto ch = [](const ChannelModel& c) {
    return std::tuple(c.base_delay, c.jitter_sigma, c.loss_probability);
  };
  return a.mode == b.mode && a.species == b.species && a.eta == b.eta &&
         a.alice_collapse_time == b.alice_collapse_time && a.alice == b.alice && a.bob == b.bob &&
         a.phase_lock == b.phase_lock && ch(a.channel) == ch(b.channel) && same_to &&
         a.medium == b.medium && a.seeds.quantum == b.seeds.quantum &&
         a.seeds.channel == b.seeds.channel && a.sweep == b.sweep && a.output_dir == b.output_dir;
}

bool runnable(const std::vector<Diagnostic>& diagnostics) noexcept {
  return std::none_of(diagnostics.begin(), diagnostics.end(),
                      [](const Diagnostic& d) { return d.severity == Severity::error; });
}

std::string diagnostics_json(const std::vector<Diagnostic>& diagnostics) {
  ojson arr = ojson::array();
  for (const auto& d : diagnostics) {
    arr.push_back({{"field", d.field},
                   {"constraint", d.constraint},
                   {"observed", d.observed},
                   {"severity", to_string(d.severity)}});
  }
  return arr.dump();
}

// ---------------------------------------------------------------- parsing

namespace {

/// Strict field reader: unknown keys and wrong types become diagnostics.
class Reader {
 public:
  explicit Reader(std::vector<Diagnostic>& diags) : diags_(diags) {}

  bool object(const ojson& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) {
      fail(path, "must be an object", j.dump());
      return false;
    }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : j.items()) {
      if (!allowed.count(item.key())) fail(join(path, item.key()), "unknown key", item.key());
    }
    return true;
  }

  void number(const ojson& j, const std::string& path, const char* key, double& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number()) {
      fail(join(path, key), "must be a number", v.dump());
      return;
    }
    out = v.get<double>();
  }

  void count(const ojson& j, const std::string& path, const char* key, std::uint64_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) {
      fail(join(path, key), "must be a non-negative integer", v.dump());
      return;
    }
    out = v.get<std::uint64_t>();
  }

  void text(const ojson& j, const std::string& path, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_string()) {
      fail(join(path, key), "must be a string", v.dump());
      return;
    }
    out = v.get<std::string>();
  }

  void numbers(const ojson& j, const std::string& path, const char* key, std::vector<double>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array()) {
      fail(join(path, key), "must be an array of numbers", v.dump());
      return;
    }
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        fail(join(path, key) + "[" + std::to_string(i) + "]", "must be a number", v[i].dump());
        continue;
      }
      out.push_back(v[i].get<double>());
    }
  }

  void phases(const ojson& j, const std::string& path, const char* key,
              std::map<std::string, double>& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_object()) {
      fail(join(path, key), "must map species name to radians", v.dump());
      return;
    }
    for (const auto& item : v.items()) {
      if (!item.value().is_number()) {
        fail(join(join(path, key), item.key()), "must be a number", item.value().dump());
        continue;
      }
      out[item.key()] = item.value().get<double>();
    }
  }

  void fail(const std::string& field, const std::string& constraint, const std::string& observed) {
    diags_.push_back({field, constraint, observed, Severity::error});
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  std::vector<Diagnostic>& diags_;
};

void read_schedule(Reader& r, const ojson& j, const std::string& path, ScheduleConfig& s) {
  if (!r.object(j, path, {"start", "stop", "n_points", "batch_size"})) return;
  r.number(j, path, "start", s.start);
  r.number(j, path, "stop", s.stop);
  r.count(j, path, "n_points", s.n_points);
  r.count(j, path, "batch_size", s.batch_size);
}

void read_party(Reader& r, const ojson& j, const std::string& path, PartyScenario& p,
                bool& has_schedule) {
  if (!r.object(j, path, {"basis_phase", "clock_offset", "schedule"})) return;
  r.phases(j, path, "basis_phase", p.basis_phase);
  r.number(j, path, "clock_offset", p.clock_offset);
  if (j.contains("schedule")) {
    has_schedule = true;
    read_schedule(r, j.at("schedule"), Reader::join(path, "schedule"), p.schedule);
  }
}

}  // namespace

ParseResult parse_config(std::string_view json_text) {
  ParseResult result;
  auto& diags = result.diagnostics;
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    diags.push_back({"", "must be valid JSON", e.what(), Severity::error});
    return result;
  }

  Reader r(diags);
  if (!r.object(j, "",
                {"mode", "species", "eta", "alice_collapse_time", "alice", "bob", "phase_lock",
                 "channel", "time_origin", "medium", "seeds", "sweep", "output_dir"})) {
    return result;
  }

  ScenarioConfig c;
  std::string mode = "single_frequency";
  r.text(j, "", "mode", mode);
  if (mode == "single_frequency") {
    c.mode = ScenarioMode::single_frequency;
  } else if (mode == "two_frequency") {
    c.mode = ScenarioMode::two_frequency;
  } else if (mode == "time_origin") {
    c.mode = ScenarioMode::time_origin;
  } else if (mode == "baseline_sweep") {
    c.mode = ScenarioMode::baseline_sweep;
  } else {
    r.fail("mode", "one of single_frequency, two_frequency, time_origin, baseline_sweep", mode);
  }

  if (j.contains("species")) {
    const auto& arr = j.at("species");
    if (!arr.is_array()) {
      r.fail("species", "must be an array", arr.dump());
    } else {
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = "species[" + std::to_string(i) + "]";
        SpeciesConfig s;
        if (r.object(arr[i], path, {"name", "omega", "n_pairs"})) {
          r.text(arr[i], path, "name", s.name);
          r.number(arr[i], path, "omega", s.omega);
          r.count(arr[i], path, "n_pairs", s.n_pairs);
        }
        c.species.push_back(std::move(s));
      }
    }
  }

  r.number(j, "", "eta", c.eta);
  r.number(j, "", "alice_collapse_time", c.alice_collapse_time);

  bool alice_schedule = false;
  bool bob_schedule = false;
  if (j.contains("alice")) read_party(r, j.at("alice"), "alice", c.alice, alice_schedule);
  if (j.contains("bob")) read_party(r, j.at("bob"), "bob", c.bob, bob_schedule);
  if (alice_schedule && !bob_schedule) c.bob.schedule = c.alice.schedule;

  if (j.contains("phase_lock")) {
    const auto& pl = j.at("phase_lock");
    if (r.object(pl, "phase_lock", {"mode", "delta", "seed"})) {
      std::string pm = "delta";
      r.text(pl, "phase_lock", "mode", pm);
      if (pm == "explicit") {
        c.phase_lock.mode = PhaseLockMode::explicit_phases;
      } else if (pm == "delta") {
        c.phase_lock.mode = PhaseLockMode::delta;
      } else if (pm == "random") {
        c.phase_lock.mode = PhaseLockMode::random;
      } else {
        r.fail("phase_lock.mode", "one of explicit, delta, random", pm);
      }
      r.number(pl, "phase_lock", "delta", c.phase_lock.delta);
      r.count(pl, "phase_lock", "seed", c.phase_lock.seed);
    }
  }

  if (j.contains("channel")) {
    const auto& ch = j.at("channel");
    if (r.object(ch, "channel", {"base_delay", "jitter_sigma", "loss_probability"})) {
      r.number(ch, "channel", "base_delay", c.channel.base_delay);
      r.number(ch, "channel", "jitter_sigma", c.channel.jitter_sigma);
      r.number(ch, "channel", "loss_probability", c.channel.loss_probability);
    }
  }

  if (j.contains("time_origin")) {
    const auto& to = j.at("time_origin");
    TimeOriginConfig t;
    std::uint64_t n_pairs = 0;
    if (r.object(to, "time_origin", {"omega1", "delta_omega", "protocol_duration", "n_pairs"})) {
      r.number(to, "time_origin", "omega1", t.omega1);
      r.number(to, "time_origin", "delta_omega", t.delta_omega);
      r.number(to, "time_origin", "protocol_duration", t.protocol_duration);
      r.count(to, "time_origin", "n_pairs", n_pairs);
    }
    c.time_origin = t;
    // Species follow from omega1 and delta_omega unless listed explicitly.
    if (!j.contains("species")) {
      c.species.push_back({"clock1", t.omega1, n_pairs});
      c.species.push_back({"clock2", t.omega1 + t.delta_omega, n_pairs});
    }
  }

  if (j.contains("medium")) {
    const auto& m = j.at("medium");
    MediumGrid g;
    if (r.object(m, "medium",
                 {"distances", "sigmas", "mean_index", "correlation_time", "n_trials",
                  "qcs_trials"})) {
      r.numbers(m, "medium", "distances", g.distances);
      r.numbers(m, "medium", "sigmas", g.sigmas);
      r.number(m, "medium", "mean_index", g.mean_index);
      r.number(m, "medium", "correlation_time", g.correlation_time);
      r.count(m, "medium", "n_trials", g.n_trials);
      r.count(m, "medium", "qcs_trials", g.qcs_trials);
    }
    c.medium = g;
  }

  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (r.object(s, "seeds", {"quantum", "channel"})) {
      r.count(s, "seeds", "quantum", c.seeds.quantum);
      r.count(s, "seeds", "channel", c.seeds.channel);
    }
  }

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    if (r.object(s, "sweep", {"n_seeds", "deltas", "threads"})) {
      r.count(s, "sweep", "n_seeds", c.sweep.n_seeds);
      r.numbers(s, "sweep", "deltas", c.sweep.deltas);
      r.count(s, "sweep", "threads", c.sweep.threads);
    }
  }

  r.text(j, "", "output_dir", c.output_dir);

  if (diags.empty()) result.config = std::move(c);
  return result;
}

ParseResult load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    ParseResult r;
    r.diagnostics.push_back({"", "config file must be readable", path.string(), Severity::error});
    return r;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

ojson schedule_json(const ScheduleConfig& s) {
  return {{"start", s.start}, {"stop", s.stop}, {"n_points", s.n_points}, {"batch_size", s.batch_size}};
}

ojson party_json(const PartyScenario& p) {
  ojson phases = ojson::object();
  for (const auto& [k, v] : p.basis_phase) phases[k] = v;
  return {{"basis_phase", phases}, {"clock_offset", p.clock_offset}, {"schedule", schedule_json(p.schedule)}};
}

ojson config_json(const ScenarioConfig& c) {
  ojson j;
  j["mode"] = to_string(c.mode);
  ojson species = ojson::array();
  for (const auto& s : c.species) {
    species.push_back({{"name", s.name}, {"omega", s.omega}, {"n_pairs", s.n_pairs}});
  }
  j["species"] = species;
  j["eta"] = c.eta;
  j["alice_collapse_time"] = c.alice_collapse_time;
  j["alice"] = party_json(c.alice);
  j["bob"] = party_json(c.bob);
  j["phase_lock"] = {{"mode", to_string(c.phase_lock.mode)},
                     {"delta", c.phase_lock.delta},
                     {"seed", c.phase_lock.seed}};
  j["channel"] = {{"base_delay", c.channel.base_delay},
                  {"jitter_sigma", c.channel.jitter_sigma},
                  {"loss_probability", c.channel.loss_probability}};
  if (c.time_origin) {
    j["time_origin"] = {{"omega1", c.time_origin->omega1},
                        {"delta_omega", c.time_origin->delta_omega},
                        {"protocol_duration", c.time_origin->protocol_duration}};
  }
  if (c.medium) {
    j["medium"] = {{"distances", c.medium->distances},
                   {"sigmas", c.medium->sigmas},
                   {"mean_index", c.medium->mean_index},
                   {"correlation_time", c.medium->correlation_time},
                   {"n_trials", c.medium->n_trials},
                   {"qcs_trials", c.medium->qcs_trials}};
  }
  j["seeds"] = {{"quantum", c.seeds.quantum}, {"channel", c.seeds.channel}};
  j["sweep"] = {{"n_seeds", c.sweep.n_seeds}, {"deltas", c.sweep.deltas}, {"threads", c.sweep.threads}};
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace

std::string to_json(const ScenarioConfig& config) { return config_json(config).dump(2) + "\n"; }

// ------------------------------------------------------------- validation

namespace {

class Checker {
 public:
  void error(std::string field, std::string constraint, std::string observed) {
    out.push_back({std::move(field), std::move(constraint), std::move(observed), Severity::error});
  }
  void warning(std::string field, std::string constraint, std::string observed) {
    out.push_back({std::move(field), std::move(constraint), std::move(observed), Severity::warning});
  }
  void finite(const std::string& field, double v) {
    if (!std::isfinite(v)) error(field, "must be finite", shortest(v));
  }

  std::vector<Diagnostic> out;
};

std::size_t expected_species(ScenarioMode mode) {
  switch (mode) {
    case ScenarioMode::single_frequency: return 1;
    case ScenarioMode::two_frequency:
    case ScenarioMode::time_origin: return 2;
    case ScenarioMode::baseline_sweep: return 1;
  }
  return 1;
}

void check_schedule(Checker& ck, const std::string& path, const ScheduleConfig& s,
                    const std::vector<SpeciesConfig>& species, std::size_t min_points) {
  ck.finite(path + ".start", s.start);
  ck.finite(path + ".stop", s.stop);
  if (!(s.stop > s.start)) {
    ck.error(path + ".stop", "must exceed start", shortest(s.stop));
  }
  if (s.n_points < min_points) {
    ck.error(path + ".n_points", ">= " + std::to_string(min_points) + " for the phase fit",
             std::to_string(s.n_points));
  }
  if (s.batch_size == 0) ck.error(path + ".batch_size", ">= 1", "0");

  // Subensemble size is Binomial(N, 1/2): keep 5 sigma below N/2.
  const double need = static_cast<double>(s.n_points) * static_cast<double>(s.batch_size);
  for (std::size_t i = 0; i < species.size(); ++i) {
    const double n = static_cast<double>(species[i].n_pairs);
    const double budget = 0.5 * n - 2.5 * std::sqrt(n);
    if (need > budget) {
      std::ostringstream os;
      os << "n_points * batch_size <= N/2 - 5 sigma = " << shortest(std::floor(budget))
         << " for species '" << species[i].name << "'";
      ck.error(path, os.str(), shortest(need));
    }
  }

  if (s.n_points > 0 && s.stop > s.start) {
    const double step = (s.stop - s.start) / static_cast<double>(s.n_points);
    if (species.size() >= 2) {
      const double limit = kPi / (species[0].omega + species[1].omega);
      if (step >= limit) {
        ck.error(path, "grid step < pi/(omega1 + omega2) to resolve the fast beat factor",
                 shortest(step));
      }
    } else if (species.size() == 1 && species[0].omega > 0.0 && step >= kPi / species[0].omega) {
      ck.warning(path, "grid step < pi/omega avoids aliasing the fringe", shortest(step));
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate_config(const ScenarioConfig& c) {
  Checker ck;

  const std::size_t want = expected_species(c.mode);
  if (c.mode == ScenarioMode::baseline_sweep) {
    if (c.species.empty() || c.species.size() > 2) {
      ck.error("species", "baseline_sweep needs one or two species", std::to_string(c.species.size()));
    }
  } else if (c.species.size() != want) {
    ck.error("species", std::string(to_string(c.mode)) + " needs " + std::to_string(want) + " species",
             std::to_string(c.species.size()));
  }

  std::set<std::string> names;
  for (std::size_t i = 0; i < c.species.size(); ++i) {
    const auto& s = c.species[i];
    const std::string path = "species[" + std::to_string(i) + "]";
    if (s.name.empty()) ck.error(path + ".name", "must be non-empty", "\"\"");
    if (!names.insert(s.name).second) ck.error(path + ".name", "must be unique", s.name);
    if (!(s.omega > 0.0) || !std::isfinite(s.omega)) {
      ck.error(path + ".omega", "must be finite and > 0", shortest(s.omega));
    }
    if (s.n_pairs == 0) ck.error(path + ".n_pairs", ">= 1", "0");
  }
  if (c.species.size() == 2 && c.species[0].omega == c.species[1].omega) {
    ck.error("species[1].omega", "must differ from species[0].omega", shortest(c.species[1].omega));
  }

  ck.finite("eta", c.eta);
  ck.finite("alice_collapse_time", c.alice_collapse_time);
  ck.finite("alice.clock_offset", c.alice.clock_offset);
  ck.finite("bob.clock_offset", c.bob.clock_offset);

  const std::size_t min_points = want >= 2 || c.species.size() >= 2 ? 4 : 3;
  check_schedule(ck, "alice.schedule", c.alice.schedule, c.species, min_points);
  check_schedule(ck, "bob.schedule", c.bob.schedule, c.species, min_points);
  if (std::isfinite(c.alice.schedule.start) && c.alice.schedule.start < c.alice_collapse_time) {
    ck.error("alice.schedule.start", ">= alice_collapse_time", shortest(c.alice.schedule.start));
  }

  // Phase lock.
  for (const auto* party : {&c.alice, &c.bob}) {
    const std::string who = party == &c.alice ? "alice" : "bob";
    for (const auto& [name, phi] : party->basis_phase) {
      if (!names.count(name)) {
        ck.error(who + ".basis_phase." + name, "must name a configured species", name);
      }
      ck.finite(who + ".basis_phase." + name, phi);
    }
  }
  if (c.phase_lock.mode == PhaseLockMode::explicit_phases) {
    for (const auto& s : c.species) {
      if (!c.alice.basis_phase.count(s.name)) {
        ck.error("alice.basis_phase", "explicit phase lock needs a phase for every species", s.name);
      }
      if (!c.bob.basis_phase.count(s.name)) {
        ck.error("bob.basis_phase", "explicit phase lock needs a phase for every species", s.name);
      }
    }
    if (c.species.size() == 2 && c.alice.basis_phase.count(c.species[0].name) &&
        c.alice.basis_phase.count(c.species[1].name) && c.bob.basis_phase.count(c.species[0].name) &&
        c.bob.basis_phase.count(c.species[1].name)) {
      const auto d = [&](const std::string& n) {
        return c.alice.basis_phase.at(n) - c.bob.basis_phase.at(n);
      };
      const double spread = wrap_signed_pi(d(c.species[0].name) - d(c.species[1].name));
      if (std::abs(spread) > kInputTolerance) {
        ck.error("bob.basis_phase", "alice - bob phase offset must be equal for both species",
                 shortest(spread));
      }
    }
  } else {
    if (!c.bob.basis_phase.empty()) {
      ck.error("bob.basis_phase", "must be empty unless phase_lock.mode is explicit",
               std::to_string(c.bob.basis_phase.size()) + " entries");
    }
    ck.finite("phase_lock.delta", c.phase_lock.delta);
  }

  // Channel.
  if (!(c.channel.base_delay >= 0.0) || !std::isfinite(c.channel.base_delay)) {
    ck.error("channel.base_delay", "finite and >= 0", shortest(c.channel.base_delay));
  }
  if (!(c.channel.jitter_sigma >= 0.0) || !std::isfinite(c.channel.jitter_sigma)) {
    ck.error("channel.jitter_sigma", "finite and >= 0", shortest(c.channel.jitter_sigma));
  }
  if (!(c.channel.loss_probability >= 0.0 && c.channel.loss_probability <= 1.0)) {
    ck.error("channel.loss_probability", "in [0, 1]", shortest(c.channel.loss_probability));
  } else if (c.channel.loss_probability == 1.0) {
    ck.warning("channel.loss_probability", "< 1, the single label broadcast is always lost",
               "1");
  }

  // Time origin.
  if (c.mode == ScenarioMode::time_origin) {
    if (!c.time_origin) {
      ck.error("time_origin", "required in time_origin mode", "missing");
    } else {
      const auto& t = *c.time_origin;
      if (!(t.omega1 > 0.0) || !std::isfinite(t.omega1)) {
        ck.error("time_origin.omega1", "finite and > 0", shortest(t.omega1));
      }
      if (!(t.delta_omega > 0.0) || !std::isfinite(t.delta_omega)) {
        ck.error("time_origin.delta_omega", "finite and > 0", shortest(t.delta_omega));
      }
      if (!(t.protocol_duration > 0.0) || !std::isfinite(t.protocol_duration)) {
        ck.error("time_origin.protocol_duration", "finite and > 0", shortest(t.protocol_duration));
      }
      const double product = t.delta_omega * t.protocol_duration;
      if (!(product < 0.5 * kPi)) {
        ck.error("time_origin", "delta_omega * protocol_duration < pi/2", shortest(product));
      }
      if (c.species.size() == 2) {
        const auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::abs(b); };
        if (!near(c.species[0].omega, t.omega1)) {
          ck.error("species[0].omega", "must equal time_origin.omega1", shortest(c.species[0].omega));
        }
        if (!near(c.species[1].omega, t.omega1 + t.delta_omega)) {
          ck.error("species[1].omega", "must equal omega1 + delta_omega",
                   shortest(c.species[1].omega));
        }
      }
      if (t.delta_omega > 0.0) {
        const double t_max = c.alice_collapse_time + kPi / t.delta_omega;
        if (!(c.alice.schedule.start <= t_max && t_max < c.alice.schedule.stop)) {
          ck.warning("alice.schedule", "window should contain the envelope maximum at pi/delta_omega",
                     shortest(t_max));
        }
      }
    }
  }

  // Baseline.
  if (c.mode == ScenarioMode::baseline_sweep) {
    if (!c.medium) {
      ck.error("medium", "required in baseline_sweep mode", "missing");
    } else {
      const auto& m = *c.medium;
      if (m.distances.empty()) ck.error("medium.distances", "non-empty", "[]");
      if (m.sigmas.empty()) ck.error("medium.sigmas", "non-empty", "[]");
      for (std::size_t i = 0; i < m.distances.size(); ++i) {
        if (!(m.distances[i] > 0.0) || !std::isfinite(m.distances[i])) {
          ck.error("medium.distances[" + std::to_string(i) + "]", "finite and > 0",
                   shortest(m.distances[i]));
        }
      }
      for (std::size_t i = 0; i < m.sigmas.size(); ++i) {
        if (!(m.sigmas[i] >= 0.0) || !std::isfinite(m.sigmas[i])) {
          ck.error("medium.sigmas[" + std::to_string(i) + "]", "finite and >= 0",
                   shortest(m.sigmas[i]));
        }
      }
      if (!(m.mean_index >= 1.0) || !std::isfinite(m.mean_index)) {
        ck.error("medium.mean_index", "finite and >= 1", shortest(m.mean_index));
      }
      if (!(m.correlation_time >= 0.0)) {
        ck.error("medium.correlation_time", ">= 0", shortest(m.correlation_time));
      }
      if (m.n_trials == 0) ck.error("medium.n_trials", ">= 1", "0");
      if (m.qcs_trials == 0) ck.error("medium.qcs_trials", ">= 1", "0");
    }
  }

  if (c.sweep.n_seeds == 0) ck.error("sweep.n_seeds", ">= 1", "0");
  for (std::size_t i = 0; i < c.sweep.deltas.size(); ++i) {
    ck.finite("sweep.deltas[" + std::to_string(i) + "]", c.sweep.deltas[i]);
  }
  if (c.output_dir.empty()) ck.error("output_dir", "must be non-empty", "\"\"");
  return ck.out;
}

// --------------------------------------------------------------- running

ResolvedPhases resolve_phases(const ScenarioConfig& c) {
  ResolvedPhases r;
  if (c.phase_lock.mode == PhaseLockMode::explicit_phases) {
    r.alice = c.alice.basis_phase;
    r.bob = c.bob.basis_phase;
    if (!c.species.empty() && r.alice.count(c.species[0].name) && r.bob.count(c.species[0].name)) {
      r.delta = r.alice.at(c.species[0].name) - r.bob.at(c.species[0].name);
    }
    return r;
  }
  if (c.phase_lock.mode == PhaseLockMode::random) {
    RandomStream rng(c.phase_lock.seed, streams::phase_lock);
    r.delta = kTwoPi * rng.uniform();
  } else {
    r.delta = c.phase_lock.delta;
  }
  for (const auto& s : c.species) {
    const auto it = c.alice.basis_phase.find(s.name);
    const double a = it == c.alice.basis_phase.end() ? 0.0 : it->second;
    r.alice[s.name] = a;
    r.bob[s.name] = a - r.delta;
  }
  return r;
}

ProtocolSetup make_setup(const ScenarioConfig& c) {
  const ResolvedPhases phases = resolve_phases(c);
  ProtocolSetup setup;
  setup.alice.local_clock_offset = c.alice.clock_offset;
  setup.bob.local_clock_offset = c.bob.clock_offset;
  for (const auto& [name, phi] : phases.alice) setup.alice.basis_phase[name] = BasisPhase(phi);
  for (const auto& [name, phi] : phases.bob) setup.bob.basis_phase[name] = BasisPhase(phi);
  setup.channel = c.channel;
  for (const auto& s : c.species) {
    setup.schedules[s.name] = PartySchedules{c.alice.schedule.build(), c.bob.schedule.build()};
  }
  setup.seeds = c.seeds;
  setup.alice_start = c.alice_collapse_time;
  return setup;
}

RunOutput execute_protocol(const ScenarioConfig& c) {
  const ProtocolSetup setup = make_setup(c);
  std::vector<Ensemble> ensembles;
  ensembles.reserve(c.species.size());
  for (const auto& s : c.species) {
    ensembles.emplace_back(static_cast<std::size_t>(s.n_pairs), ClockSpecies(s.name, s.omega), c.eta);
  }

  const bool two = ensembles.size() >= 2;
  if (c.mode == ScenarioMode::time_origin) {
    if (!c.time_origin) throw Error(Errc::config, "time_origin mode without time_origin block");
    RunOutput out = establish_time_origin(*c.time_origin, ensembles[0], ensembles[1], setup);
    score_time_origin(out.result, setup);
    return out;
  }
  if (two) {
    RunOutput out = run_two_frequency(ensembles[0], ensembles[1], setup);
    score_two_frequency(out.result, setup);
    return out;
  }
  RunOutput out = run_single_frequency(ensembles.at(0), setup);
  score_single_frequency(out.result, setup);
  return out;
}

namespace {

ojson estimate_json(const std::optional<PhaseEstimate>& e) {
  if (!e) return nullptr;
  return {{"phase", e->phase},
          {"sigma", e->sigma},
          {"n_samples_used", e->n_samples_used},
          {"residual", e->residual},
          {"amplitude", e->amplitude},
          {"offset", e->offset}};
}

ojson time_json(const std::optional<TimeEstimate>& t) {
  if (!t) return nullptr;
  return {{"t", t->t}, {"sigma", t->sigma}};
}

ojson header_json(const ScenarioConfig& c) {
  return {{"record", "header"},
          {"tool", "qcs"},
          {"version", kVersion},
          {"mode", to_string(c.mode)},
          {"seeds", {{"quantum", c.seeds.quantum}, {"channel", c.seeds.channel}}}};
}

std::string header_comment(const ScenarioConfig& c, const std::string& extra) {
  std::ostringstream os;
  os << "qcs " << kVersion << " mode=" << to_string(c.mode) << " quantum_seed=" << c.seeds.quantum
     << " channel_seed=" << c.seeds.channel;
  if (!extra.empty()) os << ' ' << extra;
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

ojson result_json(const ScenarioConfig& c, const RunOutput& out) {
  const auto& r = out.result;
  ojson j = header_json(c);
  j["record"] = "result";
  j["status"] = to_string(r.status);
  j["reason"] = r.reason;
  j["delta_applied"] = resolve_phases(c).delta;
  ojson species = ojson::array();
  for (const auto& s : r.species) {
    species.push_back({{"name", s.species},
                       {"omega", s.omega},
                       {"alice", estimate_json(s.alice)},
                       {"bob", estimate_json(s.bob)}});
  }
  j["species"] = species;
  j["envelope_a"] = estimate_json(r.envelope_a);
  j["envelope_b"] = estimate_json(r.envelope_b);
  j["t_origin_a"] = time_json(r.t_origin_a);
  j["t_origin_b"] = time_json(r.t_origin_b);
  j["sync_error"] = r.sync_error ? ojson(*r.sync_error) : ojson(nullptr);
  return j;
}

}  // namespace

std::vector<BaselineCell> run_baseline_grid(const ScenarioConfig& c) {
  if (!c.medium) throw Error(Errc::config, "baseline grid needs a medium block");
  const MediumGrid& g = *c.medium;
  const double true_offset = c.bob.clock_offset - c.alice.clock_offset;

  std::vector<BaselineCell> cells;
  for (double sigma : g.sigmas) {
    for (double distance : g.distances) {
      BaselineCell cell;
      cell.sigma = sigma;
      cell.distance = distance;
      cell.n_trials = g.n_trials;
      MediumModel medium{distance, g.mean_index, sigma, g.correlation_time};

      std::vector<double> es(g.n_trials);
      const RandomStream base(c.seeds.channel, streams::medium);
      for (std::uint64_t k = 0; k < g.n_trials; ++k) {
        RandomStream rng = base.derive(k);
        es[k] = einstein_sync(medium, rng, true_offset).error;
      }
      cell.rms_error_es = rms(es);

      ScenarioConfig trial = c;
      trial.mode = c.species.size() >= 2 ? ScenarioMode::two_frequency
                                         : ScenarioMode::single_frequency;
      trial.channel = medium.as_channel(c.channel.loss_probability);
      for (std::uint64_t k = 0; k < g.qcs_trials; ++k) {
        trial.seeds.quantum = derive_seed(c.seeds.quantum, k);
        const RunOutput out = execute_protocol(trial);
        if (out.result.sync_error) {
          cell.qcs_errors.push_back(*out.result.sync_error);
        } else {
          ++cell.qcs_inconclusive;
        }
      }
      cell.rms_error_qcs = cell.qcs_errors.empty() ? std::nan("") : rms(cell.qcs_errors);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

int run_scenario(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  const auto diags = validate_config(config);
  if (!runnable(diags)) {
    std::cerr << diagnostics_json(diags) << '\n';
    return exit_invalid_config;
  }
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "config.json", to_json(config));

  if (config.mode == ScenarioMode::baseline_sweep) {
    const auto cells = run_baseline_grid(config);
    std::ostringstream csv;
    csv << "# " << header_comment(config, {}) << '\n';
    csv << "sigma,distance,rms_error_es,rms_error_qcs,n_trials\n";
    std::uint64_t inconclusive = 0;
    ojson rows = ojson::array();
    for (const auto& cell : cells) {
      csv << shortest(cell.sigma) << ',' << shortest(cell.distance) << ','
          << shortest(cell.rms_error_es) << ',' << shortest(cell.rms_error_qcs) << ','
          << cell.n_trials << '\n';
      inconclusive += cell.qcs_inconclusive;
      rows.push_back({{"sigma", cell.sigma},
                      {"distance", cell.distance},
                      {"rms_error_es", cell.rms_error_es},
                      {"rms_error_qcs", cell.qcs_errors.empty() ? ojson(nullptr)
                                                                : ojson(cell.rms_error_qcs)},
                      {"qcs_synced", cell.qcs_errors.size()},
                      {"qcs_inconclusive", cell.qcs_inconclusive}});
    }
    write_file(out_dir / "baseline.csv", csv.str());
    ojson result = header_json(config);
    result["record"] = "baseline";
    result["cells"] = rows;
    write_file(out_dir / "result.json", result.dump(2) + "\n");
    return inconclusive == 0 ? exit_ok : exit_inconclusive;
  }

  const RunOutput out = execute_protocol(config);

  std::ostringstream events;
  out.transcript.write_jsonl(events, header_json(config).dump());
  write_file(out_dir / "events.jsonl", events.str());

  for (const auto* side : {&out.alice_series, &out.bob_series}) {
    const std::string party = side == &out.alice_series ? "alice" : "bob";
    for (const auto& [species, series] : *side) {
      std::ostringstream csv;
      write_csv(csv, series, header_comment(config, "party=" + party + " species=" + species));
      write_file(out_dir / ("series_" + party + "_" + species + ".csv"), csv.str());
    }
  }
  write_file(out_dir / "result.json", result_json(config, out).dump(2) + "\n");
  return out.result.status == RunStatus::synced ? exit_ok : exit_inconclusive;
}

int run_sweep(const ScenarioConfig& config, const std::filesystem::path& out_dir) {
  auto diags = validate_config(config);
  if (config.mode == ScenarioMode::baseline_sweep) {
    diags.push_back({"mode", "sweep runs protocol modes; use run for baseline_sweep",
                     to_string(config.mode), Severity::error});
  }
  if (!runnable(diags)) {
    std::cerr << diagnostics_json(diags) << '\n';
    return exit_invalid_config;
  }

  struct Cell {
    std::uint64_t seed_index;
    std::optional<double> delta;
    ScenarioConfig config;
    std::optional<SyncResult> result;
    std::exception_ptr error;
  };
  std::vector<Cell> cells;
  const std::vector<std::optional<double>> deltas = [&] {
    std::vector<std::optional<double>> d;
    for (double x : config.sweep.deltas) d.emplace_back(x);
    if (d.empty()) d.emplace_back(std::nullopt);
    return d;
  }();
  for (const auto& delta : deltas) {
    for (std::uint64_t s = 0; s < config.sweep.n_seeds; ++s) {
      ScenarioConfig cell = config;
      cell.seeds.quantum = derive_seed(config.seeds.quantum, s);
      if (delta) {
        cell.phase_lock.mode = PhaseLockMode::delta;
        cell.phase_lock.delta = *delta;
        cell.bob.basis_phase.clear();
      }
      cells.push_back({s, delta, std::move(cell), std::nullopt, nullptr});
    }
  }

  std::size_t n_threads = config.sweep.threads;
  if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        cells[i].result = execute_protocol(cells[i].config).result;
      } catch (...) {
        cells[i].error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& cell : cells) {
    if (cell.error) std::rethrow_exception(cell.error);
  }

  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "config.json", to_json(config));
  std::ostringstream csv;
  csv << "# " << header_comment(config, "cells=" + std::to_string(cells.size())) << '\n';
  csv << "cell,seed_index,delta,quantum_seed,status,alice_phase,alice_sigma,bob_phase,bob_sigma,"
         "envelope_a,envelope_a_sigma,envelope_b,envelope_b_sigma,t_origin_a,t_origin_b,sync_error\n";
  const auto opt = [](std::optional<double> v) { return v ? shortest(*v) : std::string(); };
  bool all_synced = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    const SyncResult& r = *cell.result;
    all_synced = all_synced && r.status == RunStatus::synced;
    std::optional<double> ap, as, bp, bs, ea, eas, eb, ebs, ta, tb;
    if (!r.species.empty() && r.species[0].alice) {
      ap = r.species[0].alice->phase;
      as = r.species[0].alice->sigma;
    }
    if (!r.species.empty() && r.species[0].bob) {
      bp = r.species[0].bob->phase;
      bs = r.species[0].bob->sigma;
    }
    if (r.envelope_a) {
      ea = r.envelope_a->phase;
      eas = r.envelope_a->sigma;
    }
    if (r.envelope_b) {
      eb = r.envelope_b->phase;
      ebs = r.envelope_b->sigma;
    }
    if (r.t_origin_a) ta = r.t_origin_a->t;
    if (r.t_origin_b) tb = r.t_origin_b->t;
    csv << i << ',' << cell.seed_index << ',' << shortest(resolve_phases(cell.config).delta) << ','
        << cell.config.seeds.quantum << ',' << to_string(r.status) << ',' << opt(ap) << ','
        << opt(as) << ',' << opt(bp) << ',' << opt(bs) << ',' << opt(ea) << ',' << opt(eas) << ','
        << opt(eb) << ',' << opt(ebs) << ',' << opt(ta) << ',' << opt(tb) << ','
        << opt(r.sync_error) << '\n';
  }
  write_file(out_dir / "sweep.csv", csv.str());
  return all_synced ? exit_ok : exit_inconclusive;
}

}  // namespace qcs
