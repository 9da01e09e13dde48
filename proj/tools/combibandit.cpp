#include <iostream>

#include "CLI11.hpp"
#include "combibandit/cli.hpp"

int main(int argc, char** argv) {
  using namespace combibandit;

  CLI::App app{"Thompson sampling for combinatorial semi-bandits"};
  app.require_subcommand(1);

  RunManifest manifest;
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t reps = 0;
  std::vector<std::string> overrides;

  const std::vector<std::pair<Command, std::string>> commands = {
      {Command::simulate, "Replicated regret curves on a bandit scenario"},
      {Command::resettle, "Monthly resettlement simulation with capacity carryover"},
      {Command::bound, "Cumulative and per-capita regret bound curves"},
      {Command::lemmas, "Exact lemma checks on the packaged small instances"},
      {Command::infer, "Randomization test of a matching null hypothesis"},
  };
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, reps_opts;
  for (const auto& [cmd, help] : commands) {
    auto* sub = app.add_subcommand(to_string(cmd), help);
    sub->add_option("--config", config, "Config file (INI sections)")->check(CLI::ExistingFile);
    seed_opts.push_back(sub->add_option("--seed", seed, "Base seed, overrides [run] seed"));
    reps_opts.push_back(sub->add_option("--reps", reps, "Replications, overrides [run] replications")
                            ->check(CLI::PositiveNumber));
    sub->add_option("--out", out, "Output directory")->capture_default_str();
    sub->add_option("--set", overrides, "Override a config key: section.key=value");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitBadInput;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    manifest.command = commands[i].first;
    if (seed_opts[i]->count()) manifest.seed = seed;
    if (reps_opts[i]->count()) manifest.replications = reps;
  }
  manifest.config_path = config;
  manifest.output_dir = out;
  manifest.overrides = overrides;
  return run_command(manifest, std::cout, std::cerr);
}
