#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qcs/scenario.hpp"

namespace {

using namespace qcs;
namespace fs = std::filesystem;

const fs::path kScenarios = QCS_SCENARIO_DIR;

ScenarioConfig load_ok(const std::string& name) {
  auto r = load_config(kScenarios / name);
  if (!r.config) ADD_FAILURE() << diagnostics_json(r.diagnostics);
  return *r.config;
}

bool has_field(const std::vector<Diagnostic>& d, const std::string& prefix, Severity sev) {
  for (const auto& x : d) {
    if (x.field.rfind(prefix, 0) == 0 && x.severity == sev) return true;
  }
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qcs_test_" + name);
  fs::remove_all(p);
  return p;
}

ScenarioConfig small_single() {
  auto c = load_ok("single_frequency.json");
  c.species[0].n_pairs = 20000;
  c.alice.schedule.batch_size = 400;
  c.bob.schedule.batch_size = 400;
  return c;
}

TEST(Scenario, SamplesParseAndValidate) {
  for (const char* name : {"single_frequency.json", "offset_recovery.json", "two_frequency.json",
                           "time_origin.json", "baseline_sweep.json"}) {
    const auto c = load_ok(name);
    EXPECT_TRUE(runnable(validate_config(c))) << name << diagnostics_json(validate_config(c));
  }
}

TEST(Scenario, EchoRoundTrips) {
  for (const char* name : {"single_frequency.json", "two_frequency.json", "time_origin.json",
                           "baseline_sweep.json"}) {
    const auto c = load_ok(name);
    const auto again = parse_config(to_json(c));
    ASSERT_TRUE(again.config.has_value()) << diagnostics_json(again.diagnostics);
    EXPECT_TRUE(*again.config == c) << name;
    EXPECT_EQ(to_json(*again.config), to_json(c));
  }
}

TEST(Scenario, TimeOriginFillsSpecies) {
  const auto c = load_ok("time_origin.json");
  ASSERT_EQ(c.species.size(), 2u);
  EXPECT_EQ(c.species[0].name, "clock1");
  EXPECT_DOUBLE_EQ(c.species[1].omega, c.time_origin->omega1 + c.time_origin->delta_omega);
}

TEST(Scenario, TimeOriginConstraintRejectedAtLoad) {
  const auto c = load_ok("time_origin_invalid.json");
  const auto d = validate_config(c);
  EXPECT_FALSE(runnable(d));
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d[0].field, "time_origin");
  EXPECT_EQ(d[0].observed, "1.6");
}

TEST(Scenario, ParseDiagnostics) {
  EXPECT_FALSE(parse_config("{").config.has_value());
  const auto unknown = parse_config(R"({"mode":"single_frequency","speceis":[]})");
  EXPECT_FALSE(unknown.config.has_value());
  ASSERT_EQ(unknown.diagnostics.size(), 1u);
  EXPECT_EQ(unknown.diagnostics[0].field, "speceis");
  const auto wrong = parse_config(R"({"species":[{"name":"x","omega":"fast","n_pairs":-3}]})");
  ASSERT_EQ(wrong.diagnostics.size(), 2u);
  EXPECT_EQ(wrong.diagnostics[0].field, "species[0].omega");
  EXPECT_EQ(wrong.diagnostics[1].field, "species[0].n_pairs");
  EXPECT_FALSE(parse_config(R"({"mode":"three_frequency"})").config.has_value());
}

TEST(Scenario, ValidationExamples) {
  auto c = small_single();
  ASSERT_TRUE(validate_config(c).empty()) << diagnostics_json(validate_config(c));

  auto bad_omega = c;
  bad_omega.species[0].omega = 0.0;
  EXPECT_TRUE(has_field(validate_config(bad_omega), "species[0].omega", Severity::error));

  auto greedy = c;
  greedy.alice.schedule.batch_size = 500;  // 10000 > 10000 - 354
  EXPECT_TRUE(has_field(validate_config(greedy), "alice.schedule", Severity::error));

  auto lossy = c;
  lossy.channel.loss_probability = 1.0;
  const auto d = validate_config(lossy);
  EXPECT_TRUE(runnable(d));
  EXPECT_TRUE(has_field(d, "channel.loss_probability", Severity::warning));

  auto explicit_phases = c;
  explicit_phases.phase_lock.mode = PhaseLockMode::explicit_phases;
  EXPECT_TRUE(has_field(validate_config(explicit_phases), "bob.basis_phase", Severity::error));
  explicit_phases.bob.basis_phase["cs"] = -0.5;
  EXPECT_TRUE(validate_config(explicit_phases).empty());
  EXPECT_DOUBLE_EQ(resolve_phases(explicit_phases).delta, 0.5);
}

TEST(Scenario, RandomDeltaDependsOnlyOnItsSeed) {
  auto c = small_single();
  c.phase_lock.mode = PhaseLockMode::random;
  c.phase_lock.seed = 5;
  const double d1 = resolve_phases(c).delta;
  c.seeds.quantum += 1;
  c.seeds.channel += 1;
  EXPECT_EQ(resolve_phases(c).delta, d1);
  c.phase_lock.seed = 6;
  EXPECT_NE(resolve_phases(c).delta, d1);
  EXPECT_GE(d1, 0.0);
  EXPECT_LT(d1, kTwoPi);
}

TEST(Scenario, RunWritesArtifactsAndIsReproducible) {
  const auto c = small_single();
  const auto a = scratch("run_a"), b = scratch("run_b");
  EXPECT_EQ(run_scenario(c, a), exit_ok);
  EXPECT_EQ(run_scenario(c, b), exit_ok);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
  EXPECT_EQ(files, 5u);  // config, events, two series, result
  const auto echo = load_config(a / "config.json");
  ASSERT_TRUE(echo.config.has_value());
  EXPECT_TRUE(*echo.config == c);
  EXPECT_NE(slurp(a / "series_bob_cs.csv").find("quantum_seed=20240611"), std::string::npos);
  EXPECT_NE(slurp(a / "events.jsonl").find("\"version\":\"0.1.0\""), std::string::npos);
}

TEST(Scenario, ExitCodes) {
  auto c = small_single();
  c.channel.loss_probability = 1.0;
  const auto lost = scratch("lost");
  EXPECT_EQ(run_scenario(c, lost), exit_inconclusive);
  EXPECT_NE(slurp(lost / "result.json").find("\"status\": \"no_sync\""), std::string::npos);
  EXPECT_NE(slurp(lost / "result.json").find("\"sync_error\": null"), std::string::npos);
  auto bad = small_single();
  bad.species[0].omega = -1.0;
  const auto bad_dir = scratch("bad");
  EXPECT_EQ(run_scenario(bad, bad_dir), exit_invalid_config);
  EXPECT_FALSE(fs::exists(bad_dir));
}

TEST(Scenario, BaselineGridHasOneRowPerCell) {
  auto c = load_ok("baseline_sweep.json");
  c.species[0].n_pairs = 20000;
  c.alice.schedule.batch_size = 400;
  c.bob.schedule.batch_size = 400;
  c.medium->n_trials = 200;
  c.medium->qcs_trials = 3;
  const auto dir = scratch("baseline");
  EXPECT_EQ(run_scenario(c, dir), exit_ok);
  std::istringstream csv(slurp(dir / "baseline.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (rows++ == 0) EXPECT_EQ(line, "sigma,distance,rms_error_es,rms_error_qcs,n_trials");
  }
  EXPECT_EQ(rows, 1 + c.medium->sigmas.size() * c.medium->distances.size());

  const auto cells = run_baseline_grid(c);
  for (const auto& cell : cells) {
    if (cell.sigma == 0.0) EXPECT_EQ(cell.rms_error_es, 0.0);
    EXPECT_EQ(cell.qcs_errors, cells.front().qcs_errors);
  }
}

TEST(Scenario, SweepIsOrderedAndThreadCountInvariant) {
  auto c = small_single();
  c.sweep.n_seeds = 6;
  c.sweep.deltas = {0.0, 1.0};
  c.sweep.threads = 1;
  const auto a = scratch("sweep1");
  EXPECT_EQ(run_sweep(c, a), exit_ok);
  c.sweep.threads = 3;
  const auto b = scratch("sweep3");
  EXPECT_EQ(run_sweep(c, b), exit_ok);
  const std::string sa = slurp(a / "sweep.csv");
  // The config echo differs in the thread count only.
  EXPECT_EQ(sa, slurp(b / "sweep.csv"));
  std::size_t lines = 0;
  for (char ch : sa) lines += ch == '\n';
  EXPECT_EQ(lines, 2u + 12u);
}

}  // namespace
