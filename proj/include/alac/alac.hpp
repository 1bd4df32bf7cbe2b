#pragma once

// Adaptive Lyapunov-based actor-critic training.
//
// The loop alternates episode rollouts with minibatch updates of the
// Lyapunov critic (TD regression), the policy (Lagrangian of the stability
// certificate plus an entropy floor), the multipliers, and the Polyak-averaged
// target networks.

#include "alac/envs.hpp"
#include "alac/nets.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace alac {

struct Transition {
  Vector s;
  Vector a;
  double c = 0.0;
  Vector s_next;
};

struct Batch {
  Matrix s;       // (state_dim x n)
  Matrix a;       // (action_dim x n)
  Vector c;       // (n)
  Matrix s_next;  // (state_dim x n)

  Eigen::Index size() const { return c.size(); }
};

/// Fixed-capacity ring buffer; once full, each push overwrites the oldest.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  /// n draws, uniform with replacement. Requires size() >= n > 0.
  Batch sample(std::size_t n, RngStream& rng) const;

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t insertions() const { return insertions_; }
  /// i-th stored item in storage order (not insertion order).
  const Transition& at(std::size_t i) const { return items_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::size_t insertions_ = 0;
  std::vector<Transition> items_;
};

enum class CertificationMode { Asc, Upper, Lower, FixedK, SacCost };

std::string to_string(CertificationMode m);
CertificationMode mode_from_string(const std::string& name);

struct Multipliers {
  double lambda_l = 1.0;
  double lambda_e = 1.0;
  double lambda = 1.0;  // min(lambda_l, gamma)
  double k = 0.0;       // 1 - lambda_l

  static Multipliers initial(double lambda_l, double lambda_e, double gamma);
  /// Throws NumericalError if any multiplier invariant is broken.
  void check(double gamma) const;
};

struct TrainConfig {
  double lr_actor = 1e-4;
  double lr_lyapunov = 3e-4;
  double lr_multipliers = 3e-4;
  double gamma = 0.995;
  double polyak = 0.005;
  int batch_size = 256;
  std::size_t buffer_capacity = 1'000'000;
  /// Steps per episode; 0 uses the environment horizon.
  int episode_length = 0;
  long total_steps = 0;
  /// Updates after each episode; 0 means one per episode step.
  int updates_per_episode = 0;
  /// Entropy floor in log pi <= -Z_e; NaN means -action_dim.
  double entropy_target = std::numeric_limits<double>::quiet_NaN();
  CertificationMode mode = CertificationMode::Asc;
  double fixed_k = 0.1;
  std::vector<int> actor_hidden{64, 64};
  /// Hidden widths followed by the output width v.
  std::vector<int> critic_layers{64, 64, 16};
  Activation critic_activation = Activation::Relu;
  double lambda_l_init = 1.0;
  double lambda_e_init = 1.0;
  /// Updates start once the buffer holds warmup_factor * batch_size items.
  int warmup_factor = 5;
  double gs_eps = 1e-6;
  /// false gives the zero-learning (random initial policy) baseline.
  bool learning_enabled = true;

  void validate() const;
  double resolved_entropy_target(int action_dim) const;
};

/// One row of the training log.
struct MetricsRecord {
  long step = 0;
  long episode = 0;
  double cost_return = 0.0;
  double mean_delta_l = 0.0;
  double violation_rate = 0.0;
  double pos_part_delta_l = 0.0;
  double lambda_l = 0.0;
  double lambda_e = 0.0;
  double lambda = 0.0;
  double k = 0.0;
  double critic_loss = 0.0;
  double policy_obj = 0.0;
  double mean_log_prob = 0.0;
  /// Gradient updates run during this episode (not part of the CSV).
  int updates = 0;
};

/// Column order of metrics.csv.
const std::vector<std::string>& metrics_columns();
std::string metrics_header();
std::string metrics_row(const MetricsRecord& r);

// ---------------------------------------------------------------------------
// Certification residual.

/// Per-sample Delta L from critic values at (s, a) and at (s', a').
///   Asc / FixedK : L' - L + k (L - lambda L')
///   Upper        : L' - L + k (L - 0)
///   Lower        : L' - L + k (L - L')
/// Sac-cost has no residual and is rejected.
Vector delta_l_values(const Vector& value_sa, const Vector& value_next, double k, double lambda,
                      CertificationMode mode);
/// d(Delta L)/d(L') for the given mode.
double delta_l_next_coefficient(double k, double lambda, CertificationMode mode);
/// The k actually used by a mode (FixedK substitutes its constant).
double effective_k(const Multipliers& m, CertificationMode mode, double fixed_k);

struct DeltaLResult {
  Vector values;
  double mean = 0.0;
  double violation_rate = 0.0;
  double positive_part = 0.0;
};

/// Delta L on a batch, with the next action drawn by reparameterized
/// sampling of the online policy at s' using `noise`.
DeltaLResult delta_l_batch(const Batch& batch, const LyapunovCritic& critic,
                           const GaussianPolicy& policy, const Multipliers& mult,
                           CertificationMode mode, const Matrix& noise, double fixed_k = 0.1);

// ---------------------------------------------------------------------------
// Critic TD regression.

struct CriticLoss {
  double loss = 0.0;
  Vector targets;
  MlpParams grad;
};

/// TD targets c + gamma * L'(s', pi'(s')) with the target policy in
/// deterministic mode.
Vector td_targets(const Batch& batch, const LyapunovCritic& target_critic,
                  const GaussianPolicy& target_policy, double gamma);

/// Mean squared TD error against fixed `targets` and its gradient.
CriticLoss critic_loss(const Batch& batch, const LyapunovCritic& critic, const Vector& targets);

/// One Adam step descending the TD loss. Returns the pre-step loss.
double critic_update(const Batch& batch, LyapunovCritic& critic, const LyapunovCritic& target_critic,
                     const GaussianPolicy& target_policy, double gamma, double lr, AdamState& adam);

// ---------------------------------------------------------------------------
// Policy objective.

struct PolicyObjective {
  double value = 0.0;
  MlpParams grad;
  DeltaLResult delta_l;  // empty in Sac-cost mode
  double mean_log_prob = 0.0;
};

/// mean[lambda_l Delta L + lambda_e (log pi(a'|s') + Z_e)] (certified modes)
/// or mean[L(s', a') + lambda_e (log pi(a'|s') + Z_e)] (Sac-cost), with a'
/// the reparameterized sample at s' under `noise`.
PolicyObjective policy_objective(const Batch& batch, const LyapunovCritic& critic,
                                 const GaussianPolicy& policy, const Multipliers& mult,
                                 CertificationMode mode, const Matrix& noise, double entropy_target,
                                 double fixed_k = 0.1);

/// One Adam step descending policy_objective.
PolicyObjective policy_update(const Batch& batch, const LyapunovCritic& critic, GaussianPolicy& policy,
                              const Multipliers& mult, CertificationMode mode, const Matrix& noise,
                              double entropy_target, double lr, AdamState& adam, double fixed_k = 0.1);

/// Dual ascent on lambda_l (clipped to [0, 1]) and lambda_e (kept >= 0),
/// then lambda = min(lambda_l, gamma), k = 1 - lambda_l.
Multipliers multiplier_update(const Multipliers& mult, double batch_mean_delta_l,
                              double batch_mean_log_prob, double entropy_target, double lr,
                              double gamma);
/// Sac-cost variant: only lambda_e moves.
Multipliers entropy_multiplier_update(const Multipliers& mult, double batch_mean_log_prob,
                                      double entropy_target, double lr);

// ---------------------------------------------------------------------------
// Training loop.

struct Agent {
  GaussianPolicy policy;
  LyapunovCritic critic;
  TargetPair targets;
  Multipliers multipliers;
};

/// Orthogonally initialized networks for `env`, targets copied from online.
Agent make_agent(const TrainConfig& config, const Env& env, RngStream& rng);

struct TrainResult {
  Agent agent;
  std::vector<MetricsRecord> metrics;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Runs the full loop. Deterministic given (config, env, seed). Throws
/// NumericalError with a diagnostic dump if a loss or parameter turns
/// non-finite.
TrainResult train(const TrainConfig& config, const Env& env, std::uint64_t seed,
                  const MetricsSink& sink = {});

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalResult {
  std::vector<double> cost_returns;
  double mean = 0.0;
  double stddev = 0.0;
  /// Per trial, per step.
  std::vector<std::vector<double>> cost_traces;
  std::vector<std::vector<double>> lyapunov_traces;
};

/// Deterministic-mode rollouts; each trial resets from `rng`. The Lyapunov
/// trace holds L(s_t, a_t) along the way when a critic is supplied.
EvalResult eval_policy(const Env& env, const GaussianPolicy& policy, const LyapunovCritic* critic,
                       int trials, RngStream& rng, const Disturbance* disturbance = nullptr,
                       int episode_length = 0);

/// Rollouts of an arbitrary deterministic controller (used by oracles and
/// scripted baselines).
using Controller = std::function<Vector(const EnvState&)>;
EvalResult eval_controller(const Env& env, const Controller& controller, int trials, RngStream& rng,
                           const Disturbance* disturbance = nullptr, int episode_length = 0);

}  // namespace alac
