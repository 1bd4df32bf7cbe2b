// alac: train, evaluate and verify Lyapunov-certified actor-critic agents.

#include "alac/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<long> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> env;
  std::optional<std::string> mode;
  std::optional<std::string> checkpoint;
  std::optional<int> jobs;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Sectioned key = value config file");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
  cmd->add_option("--env", f.env, "cartpole-cost, point-circle-cost or lintrack");
  cmd->add_option("--mode", f.mode, "asc, upper, lower, fixed-k or sac-cost");
  cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint to evaluate");
  cmd->add_option("--jobs", f.jobs, "Worker threads for sweeps and suites");
  cmd->add_option("--set", f.sets, "Override: key=value or section.key=value")->take_all();
}

alac::RunConfig resolve(const Flags& f) {
  std::vector<std::string> overrides;
  if (f.seed) overrides.push_back("run.seed=" + std::to_string(*f.seed));
  if (f.out_dir) overrides.push_back("run.out_dir=" + *f.out_dir);
  if (f.env) overrides.push_back("run.env=" + *f.env);
  if (f.mode) overrides.push_back("train.mode=" + *f.mode);
  if (f.checkpoint) overrides.push_back("eval.checkpoint=" + *f.checkpoint);
  if (f.jobs) overrides.push_back("run.jobs=" + std::to_string(*f.jobs));
  // --set comes last so it wins over the dedicated flags.
  overrides.insert(overrides.end(), f.sets.begin(), f.sets.end());
  return alac::parse_config(f.config, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive Lyapunov-based actor-critic: training, evaluation and verification"};
  app.set_version_flag("--version", alac::version_string());
  app.require_subcommand(1);

  Flags f;
  auto* train = app.add_subcommand("train", "Train an agent");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* robust = app.add_subcommand("robustness", "Disturbance sweep over a checkpoint");
  auto* verify = app.add_subcommand("verify", "Numerical checks of the stability results");
  verify->require_subcommand(1);
  for (auto* cmd : {train, eval, robust}) add_common(cmd, f);
  std::vector<std::pair<std::string, CLI::App*>> checks;
  for (const char* name : {"lemma2", "thm3", "thm4", "bound"}) {
    auto* sub = verify->add_subcommand(name);
    add_common(sub, f);
    checks.emplace_back(name, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : alac::kExitConfig;
  }

  return alac::run_command(
      [&]() -> int {
        const alac::RunConfig cfg = resolve(f);
        if (*train) return alac::cmd_train(cfg, std::cout);
        if (*eval) return alac::cmd_eval(cfg, std::cout);
        if (*robust) return alac::cmd_robustness(cfg, std::cout);
        for (const auto& [name, sub] : checks)
          if (*sub) return alac::cmd_verify(cfg, name, std::cout);
        return alac::kExitConfig;
      },
      std::cerr);
}
