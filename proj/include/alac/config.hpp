#pragma once

// Run configuration: flat sectioned `key = value` text.
//
//   # comment
//   [run]
//   env = lintrack
//   seed = 1
//   [train]
//   lr_actor = 2e-4
//   actor_hidden = 64, 64
//   [env]
//   pole_mass = 0.2
//
// Resolution order: built-in defaults, then the file, then command-line
// overrides ("key=value" or "section.key=value").

#include "alac/alac.hpp"
#include "alac/analysis.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace alac {

/// Bad key, bad value or bad file. The message always names the key.
class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

struct EvalSettings {
  std::string checkpoint;
  int trials = 20;
  double disturbance = 0.0;
  int period = 50;
  Waveform waveform = Waveform::Sine;
  /// 0 uses the environment horizon.
  int episode_length = 0;
};

struct RobustnessSettings {
  std::vector<double> magnitudes{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  int trials = 20;
  int period = 50;
  Waveform waveform = Waveform::Sine;
};

struct VerifySettings {
  /// Tabular instance from file; empty draws `instances` random MDPs.
  std::string mdp_file;
  int instances = 1;
  int states = 5;
  int actions = 2;
  double gamma = 0.9;
  double mix_eps = 1e-3;
  double k = 0.5;
  double lambda = 0.5;
  std::vector<int> horizons{10, 30, 100, 300};
  std::vector<int> trajectories{10, 100};
  int horizon = 50;
  std::vector<double> alphas{0.05, 0.1, 0.2};
  int reps = 2000;

  double track_k = 1.0;
  double track_mu = 1.0;
  double track_v0 = 1.0;
  double track_t0 = 0.0;
  double track_dt = 0.0;
  double track_omega = 1.0;
  ReferenceProfile track_profile = ReferenceProfile::ConstantSlope;
};

struct RunConfig {
  std::string env = "lintrack";
  std::map<std::string, double> env_params;
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  int jobs = 1;

  TrainConfig train;
  /// Unset means the environment's default budget.
  std::optional<long> total_steps;

  EvalSettings eval;
  RobustnessSettings robustness;
  VerifySettings verify;

  long resolved_total_steps() const;
  TrainConfig resolved_train() const;
};

/// Step budget used when total_steps is not given.
long default_total_steps(const std::string& env);

/// Applies every assignment in `in`. `source` names the input in errors.
void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source = "config");
void apply_config_file(RunConfig& cfg, const std::string& path);
/// "key=value" or "section.key=value". A bare key must be unambiguous.
void apply_override(RunConfig& cfg, const std::string& assignment);
void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key,
                      const std::string& value);

/// Defaults <- file (if any) <- overrides, then cross-field validation.
RunConfig parse_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides);

/// Cross-field checks and the environment parameter names.
void validate_config(const RunConfig& cfg);

/// Every resolved setting as ("section.key", value), in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
/// Text that parses back to the same configuration.
std::string render_config(const RunConfig& cfg);

}  // namespace alac
