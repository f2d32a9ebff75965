// qcs: run, validate or sweep a clock-synchronization scenario.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "qcs/error.hpp"
#include "qcs/scenario.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> quantum_seed;
  std::optional<std::uint64_t> channel_seed;
};

void add_common(CLI::App* cmd, Options& opt, bool with_output) {
  cmd->add_option("-c,--config", opt.config, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  if (with_output) {
    cmd->add_option("-o,--out", opt.out, "Output directory (default: the config's output_dir)");
    cmd->add_option("--quantum-seed", opt.quantum_seed, "Override seeds.quantum");
    cmd->add_option("--channel-seed", opt.channel_seed, "Override seeds.channel");
  }
}

// Returns the config, or prints diagnostics and yields nullopt.
std::optional<qcs::ScenarioConfig> load(const Options& opt) {
  auto parsed = qcs::load_config(opt.config);
  if (!parsed.config) {
    std::cerr << qcs::diagnostics_json(parsed.diagnostics) << '\n';
    return std::nullopt;
  }
  if (opt.quantum_seed) parsed.config->seeds.quantum = *opt.quantum_seed;
  if (opt.channel_seed) parsed.config->seeds.channel = *opt.channel_seed;
  return parsed.config;
}

std::filesystem::path output_dir(const Options& opt, const qcs::ScenarioConfig& config) {
  return opt.out.empty() ? std::filesystem::path(config.output_dir) : std::filesystem::path(opt.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum clock synchronization scenario runner"};
  app.set_version_flag("--version", qcs::kVersion);
  app.require_subcommand(1);

  Options run_opt, validate_opt, sweep_opt;
  auto* run = app.add_subcommand("run", "Run one scenario and write its artifacts");
  add_common(run, run_opt, true);
  auto* validate = app.add_subcommand("validate", "Check a scenario and print diagnostics as JSON");
  add_common(validate, validate_opt, false);
  auto* sweep = app.add_subcommand("sweep", "Run seed x delta cells of a scenario in parallel");
  add_common(sweep, sweep_opt, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? qcs::exit_ok : qcs::exit_invalid_config;
  }

  try {
    if (*validate) {
      const auto config = load(validate_opt);
      if (!config) return qcs::exit_invalid_config;
      const auto diags = qcs::validate_config(*config);
      std::cout << qcs::diagnostics_json(diags) << '\n';
      return qcs::runnable(diags) ? qcs::exit_ok : qcs::exit_invalid_config;
    }
    const Options& opt = *run ? run_opt : sweep_opt;
    const auto config = load(opt);
    if (!config) return qcs::exit_invalid_config;
    const auto dir = output_dir(opt, *config);
    const int code = *run ? qcs::run_scenario(*config, dir) : qcs::run_sweep(*config, dir);
    if (code == qcs::exit_inconclusive) {
      std::cerr << "protocol outcome was not a sync; see " << (dir / "result.json").string() << '\n';
    }
    return code;
  } catch (const qcs::Error& e) {
    std::cerr << "error [" << qcs::to_string(e.code()) << "]: " << e.what() << '\n';
    return e.code() == qcs::Errc::config ? qcs::exit_invalid_config : qcs::exit_runtime_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return qcs::exit_runtime_error;
  }
}
