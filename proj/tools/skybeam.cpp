// Command-line driver: skybeam <generate|train|evaluate|rollout|report|all> --config <path> [--out <dir>]

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "skybeam/pipeline/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitRuntime = 4;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV mmWave beam prediction and tracking experiments"};
  app.fallthrough();
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config JSON (defaults apply when omitted)");
  app.add_option("--out", out_dir, "output directory (overrides output_dir in the config)");
  app.add_option("--seed-override", seed_override, "replace every seed in the config with this value");
  app.add_flag("--quiet", quiet, "suppress progress messages");

  const std::pair<const char*, const char*> commands[] = {
      {"generate", "synthesize flights and write the sample and sequence CSVs"},
      {"train", "train the three predictors and three trackers"},
      {"evaluate", "top-k, joint, R2, confusion and strata on the test splits"},
      {"rollout", "50-step recursive rollouts under each beam-training schedule"},
      {"report", "merge every artifact into reports/summary.json"},
      {"all", "generate, train, evaluate, rollout and report"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string stage = app.get_subcommands().front()->get_name();

  using namespace skybeam;
  try {
    auto config = config_path.empty() ? pipeline::ExperimentConfig{} : pipeline::load_config(config_path);
    if (seed_override) config.override_seeds(*seed_override);
    if (!out_dir.empty()) config.output_dir = out_dir;
    const pipeline::RunPaths paths{config.output_dir};
    const pipeline::Logger log{quiet};
    log("config " + config.hash() + ", output " + config.output_dir);
    pipeline::run_stage(stage, config, paths, log);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << '\n';
    return kExitDependency;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
