#include "alac/alac.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace alac {

namespace {

// Batch temporaries sit just above glibc's default mmap threshold, so every
// update would otherwise map and unmap fresh pages.
void keep_batch_buffers_on_heap() {
#if defined(M_MMAP_THRESHOLD)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
  });
#endif
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
  ++insertions_;
}

Batch ReplayBuffer::sample(std::size_t n, RngStream& rng) const {
  require(n > 0, "ReplayBuffer::sample: batch size must be positive");
  if (items_.size() < n)
    throw ContractError("ReplayBuffer::sample: buffer holds " + std::to_string(items_.size()) +
                        " transitions, " + std::to_string(n) + " requested");
  const auto& first = items_.front();
  const auto cols = static_cast<Eigen::Index>(n);
  Batch b{Matrix(first.s.size(), cols), Matrix(first.a.size(), cols), Vector(cols),
          Matrix(first.s_next.size(), cols)};
  for (Eigen::Index j = 0; j < cols; ++j) {
    const Transition& t = items_[rng.below(items_.size())];
    b.s.col(j) = t.s;
    b.a.col(j) = t.a;
    b.c[j] = t.c;
    b.s_next.col(j) = t.s_next;
  }
  return b;
}

std::string to_string(CertificationMode m) {
  switch (m) {
    case CertificationMode::Asc: return "asc";
    case CertificationMode::Upper: return "upper";
    case CertificationMode::Lower: return "lower";
    case CertificationMode::FixedK: return "fixed-k";
    case CertificationMode::SacCost: return "sac-cost";
  }
  return "?";
}

CertificationMode mode_from_string(const std::string& name) {
  for (auto m : {CertificationMode::Asc, CertificationMode::Upper, CertificationMode::Lower,
                 CertificationMode::FixedK, CertificationMode::SacCost})
    if (to_string(m) == name) return m;
  throw ContractError("unknown certification mode '" + name +
                      "' (expected asc, upper, lower, fixed-k or sac-cost)");
}

Multipliers Multipliers::initial(double lambda_l, double lambda_e, double gamma) {
  Multipliers m;
  m.lambda_l = std::clamp(lambda_l, 0.0, 1.0);
  m.lambda_e = std::max(0.0, lambda_e);
  m.lambda = std::min(m.lambda_l, gamma);
  m.k = 1.0 - m.lambda_l;
  return m;
}

void Multipliers::check(double gamma) const {
  const bool ok = std::isfinite(lambda_l) && std::isfinite(lambda_e) && lambda_l >= 0.0 &&
                  lambda_l <= 1.0 && lambda_e >= 0.0 && lambda == std::min(lambda_l, gamma) &&
                  k == 1.0 - lambda_l && lambda <= gamma;
  if (!ok) {
    std::ostringstream os;
    os << "multiplier invariant broken: lambda_l=" << lambda_l << " lambda_e=" << lambda_e
       << " lambda=" << lambda << " k=" << k << " gamma=" << gamma;
    throw NumericalError(os.str());
  }
}

void TrainConfig::validate() const {
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  require(lr_actor > 0.0, "lr_actor must be positive");
  require(lr_lyapunov > 0.0, "lr_lyapunov must be positive");
  require(lr_multipliers > 0.0, "lr_multipliers must be positive");
  require(polyak >= 0.0 && polyak <= 1.0, "polyak must lie in [0, 1]");
  require(batch_size >= 1, "batch_size must be positive");
  require(buffer_capacity >= 1, "buffer_capacity must be positive");
  require(episode_length >= 0, "episode_length must be >= 0");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(updates_per_episode >= 0, "updates_per_episode must be >= 0");
  require(std::isnan(entropy_target) || std::isfinite(entropy_target),
          "entropy_target must be finite");
  require(fixed_k >= 0.0 && fixed_k <= 1.0, "fixed_k must lie in [0, 1]");
  require(!critic_layers.empty(), "critic_layers must list at least the output width");
  require(lambda_l_init >= 0.0 && lambda_l_init <= 1.0, "lambda_l_init must lie in [0, 1]");
  require(lambda_e_init >= 0.0, "lambda_e_init must be >= 0");
  require(warmup_factor >= 1, "warmup_factor must be >= 1");
  require(gs_eps > 0.0, "gs_eps must be positive");
}

double TrainConfig::resolved_entropy_target(int action_dim) const {
  return std::isnan(entropy_target) ? -static_cast<double>(action_dim) : entropy_target;
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "step",     "episode",  "cost_return", "mean_delta_l", "violation_rate",
      "pos_part_delta_l", "lambda_l", "lambda_e", "lambda", "k",
      "critic_loss", "policy_obj", "mean_log_prob"};
  return cols;
}

std::string metrics_header() {
  std::string out;
  for (const auto& c : metrics_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

namespace {

std::string fmt_real(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string metrics_row(const MetricsRecord& r) {
  std::string out = std::to_string(r.step) + ',' + std::to_string(r.episode);
  for (double x : {r.cost_return, r.mean_delta_l, r.violation_rate, r.pos_part_delta_l, r.lambda_l,
                   r.lambda_e, r.lambda, r.k, r.critic_loss, r.policy_obj, r.mean_log_prob}) {
    out += ',';
    out += fmt_real(x);
  }
  return out;
}

// ---------------------------------------------------------------------------

double delta_l_next_coefficient(double k, double lambda, CertificationMode mode) {
  switch (mode) {
    case CertificationMode::Asc:
    case CertificationMode::FixedK: return 1.0 - k * lambda;
    case CertificationMode::Upper: return 1.0;
    case CertificationMode::Lower: return 1.0 - k;
    case CertificationMode::SacCost: break;
  }
  throw ContractError("sac-cost mode has no certification residual");
}

Vector delta_l_values(const Vector& value_sa, const Vector& value_next, double k, double lambda,
                      CertificationMode mode) {
  require(value_sa.size() == value_next.size(), "delta_l_values: size mismatch");
  const double next_coeff = delta_l_next_coefficient(k, lambda, mode);
  // L' - L + k (L - x L') regrouped as c' L' - (1 - k) L.
  return next_coeff * value_next - (1.0 - k) * value_sa;
}

double effective_k(const Multipliers& m, CertificationMode mode, double fixed_k) {
  return mode == CertificationMode::FixedK ? fixed_k : m.k;
}

namespace {

DeltaLResult summarize(Vector values) {
  DeltaLResult r;
  const auto n = static_cast<double>(values.size());
  r.mean = values.mean();
  r.violation_rate = static_cast<double>((values.array() > 0.0).count()) / n;
  r.positive_part = values.cwiseMax(0.0).sum() / n;
  r.values = std::move(values);
  return r;
}

}  // namespace

DeltaLResult delta_l_batch(const Batch& batch, const LyapunovCritic& critic,
                           const GaussianPolicy& policy, const Multipliers& mult,
                           CertificationMode mode, const Matrix& noise, double fixed_k) {
  const Vector value_sa = critic_eval(critic, batch.s, batch.a);
  const Matrix next_action = policy_sample(policy, batch.s_next, noise).action;
  const Vector value_next = critic_eval(critic, batch.s_next, next_action);
  return summarize(
      delta_l_values(value_sa, value_next, effective_k(mult, mode, fixed_k), mult.lambda, mode));
}

// ---------------------------------------------------------------------------

Vector td_targets(const Batch& batch, const LyapunovCritic& target_critic,
                  const GaussianPolicy& target_policy, double gamma) {
  const Matrix next_action = policy_act(target_policy, batch.s_next);
  return batch.c + gamma * critic_eval(target_critic, batch.s_next, next_action);
}

CriticLoss critic_loss(const Batch& batch, const LyapunovCritic& critic, const Vector& targets) {
  require(batch.size() > 0, "critic_loss: empty batch");
  require(targets.size() == batch.size(), "critic_loss: targets size mismatch");
  CriticEval ev = critic_value(critic, batch.s, batch.a);
  const Vector err = ev.value - targets;
  const auto n = static_cast<double>(batch.size());
  CriticLoss out;
  out.loss = err.squaredNorm() / n;
  out.targets = targets;
  out.grad = critic_backward(critic, ev.cache, (2.0 / n) * err).params;
  return out;
}

double critic_update(const Batch& batch, LyapunovCritic& critic, const LyapunovCritic& target_critic,
                     const GaussianPolicy& target_policy, double gamma, double lr, AdamState& adam) {
  const Vector targets = td_targets(batch, target_critic, target_policy, gamma);
  const CriticLoss l = critic_loss(batch, critic, targets);
  Vector& p = critic.net.flat();
  adam_step({p.data(), static_cast<std::size_t>(p.size())},
            {l.grad.flat().data(), static_cast<std::size_t>(l.grad.flat().size())}, adam, lr);
  return l.loss;
}

// ---------------------------------------------------------------------------

PolicyObjective policy_objective(const Batch& batch, const LyapunovCritic& critic,
                                 const GaussianPolicy& policy, const Multipliers& mult,
                                 CertificationMode mode, const Matrix& noise, double entropy_target,
                                 double fixed_k) {
  require(batch.size() > 0, "policy_objective: empty batch");
  const auto n = static_cast<double>(batch.size());
  const PolicySample next = policy_sample(policy, batch.s_next, noise);
  const CriticEval next_value = critic_value(critic, batch.s_next, next.action);

  PolicyObjective out;
  out.mean_log_prob = next.log_prob.mean();
  const double entropy_term = mult.lambda_e * (out.mean_log_prob + entropy_target);

  double value_weight = 0.0;
  if (mode == CertificationMode::SacCost) {
    out.value = next_value.value.mean() + entropy_term;
    value_weight = 1.0;
  } else {
    const double k = effective_k(mult, mode, fixed_k);
    const Vector value_sa = critic_eval(critic, batch.s, batch.a);
    out.delta_l = summarize(delta_l_values(value_sa, next_value.value, k, mult.lambda, mode));
    out.value = mult.lambda_l * out.delta_l.mean + entropy_term;
    value_weight = mult.lambda_l * delta_l_next_coefficient(k, mult.lambda, mode);
  }

  // Pathwise gradient: d/dphi through a' = tanh(mean + std * xi) into L(s', a')
  // and log pi(a'|s').
  const CriticGradients cg =
      critic_backward(critic, next_value.cache, Vector::Constant(batch.size(), value_weight / n), false);
  const Vector log_prob_grad = Vector::Constant(batch.size(), mult.lambda_e / n);
  out.grad = policy_backward(policy, next.cache, cg.action, log_prob_grad).params;
  return out;
}

PolicyObjective policy_update(const Batch& batch, const LyapunovCritic& critic, GaussianPolicy& policy,
                              const Multipliers& mult, CertificationMode mode, const Matrix& noise,
                              double entropy_target, double lr, AdamState& adam, double fixed_k) {
  PolicyObjective obj =
      policy_objective(batch, critic, policy, mult, mode, noise, entropy_target, fixed_k);
  Vector& p = policy.net.flat();
  adam_step({p.data(), static_cast<std::size_t>(p.size())},
            {obj.grad.flat().data(), static_cast<std::size_t>(obj.grad.flat().size())}, adam, lr);
  return obj;
}

Multipliers multiplier_update(const Multipliers& mult, double batch_mean_delta_l,
                              double batch_mean_log_prob, double entropy_target, double lr,
                              double gamma) {
  Multipliers m = mult;
  m.lambda_l = std::clamp(mult.lambda_l + lr * batch_mean_delta_l, 0.0, 1.0);
  m.lambda_e = std::max(0.0, mult.lambda_e + lr * (batch_mean_log_prob + entropy_target));
  m.lambda = std::min(m.lambda_l, gamma);
  m.k = 1.0 - m.lambda_l;
  return m;
}

Multipliers entropy_multiplier_update(const Multipliers& mult, double batch_mean_log_prob,
                                      double entropy_target, double lr) {
  Multipliers m = mult;
  m.lambda_e = std::max(0.0, mult.lambda_e + lr * (batch_mean_log_prob + entropy_target));
  return m;
}

// ---------------------------------------------------------------------------

Agent make_agent(const TrainConfig& config, const Env& env, RngStream& rng) {
  const EnvSpec& spec = env.spec();
  Agent agent;
  agent.policy = make_policy(spec.state_dim, spec.action_dim, config.actor_hidden, rng);
  agent.critic = make_critic(spec.state_dim, spec.action_dim, config.critic_layers, env.equilibrium(),
                             rng, config.critic_activation, env.error_mask());
  agent.critic.eps = config.gs_eps;
  agent.targets.critic = agent.critic;
  agent.targets.policy = agent.policy;
  agent.multipliers = Multipliers::initial(config.lambda_l_init, config.lambda_e_init, config.gamma);
  return agent;
}

namespace {

std::string dump_state(const std::string& reason, const Batch& batch, const Multipliers& m,
                       long step, long episode) {
  std::ostringstream os;
  os.precision(17);
  os << reason << " at env step " << step << ", episode " << episode << "\n";
  os << "multipliers: lambda_l=" << m.lambda_l << " lambda_e=" << m.lambda_e
     << " lambda=" << m.lambda << " k=" << m.k << "\n";
  os << "batch (index: s | a | c | s_next):\n";
  const Eigen::IOFormat row(Eigen::FullPrecision, Eigen::DontAlignCols, " ", " ", "", "", "", "");
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    os << j << ": " << batch.s.col(j).transpose().format(row) << " | "
       << batch.a.col(j).transpose().format(row) << " | " << batch.c[j] << " | "
       << batch.s_next.col(j).transpose().format(row) << "\n";
  }
  return os.str();
}

Matrix column(const Vector& v) { return v; }

}  // namespace

TrainResult train(const TrainConfig& config, const Env& env, std::uint64_t seed,
                  const MetricsSink& sink) {
  config.validate();
  keep_batch_buffers_on_heap();
  const EnvSpec& spec = env.spec();
  const int episode_length = config.episode_length > 0 ? config.episode_length : spec.horizon;
  const int updates = config.updates_per_episode > 0 ? config.updates_per_episode : episode_length;
  const double entropy_target = config.resolved_entropy_target(spec.action_dim);
  const auto warmup = static_cast<std::size_t>(config.warmup_factor) * config.batch_size;
  const bool sac = config.mode == CertificationMode::SacCost;

  const RngStream root(seed);
  RngStream init_rng = root.derive(1);
  RngStream reset_rng = root.derive(2);
  RngStream action_rng = root.derive(3);
  RngStream batch_rng = root.derive(4);
  RngStream update_rng = root.derive(5);

  TrainResult result;
  Agent& agent = result.agent;
  agent = make_agent(config, env, init_rng);
  AdamState critic_adam(agent.critic.net.flat().size());
  AdamState policy_adam(agent.policy.net.flat().size());
  ReplayBuffer buffer(config.buffer_capacity);

  long steps = 0;
  long episode = 0;
  while (steps < config.total_steps) {
    const int len = static_cast<int>(std::min<long>(episode_length, config.total_steps - steps));
    EnvState state = env.reset(reset_rng);
    MetricsRecord rec;
    for (int t = 0; t < len; ++t) {
      const Vector action = policy_sample(agent.policy, column(state.s), action_rng).action.col(0);
      StepResult r = env.step(state, action);
      if (!std::isfinite(r.cost) || !r.next.s.allFinite())
        throw NumericalError("environment produced a non-finite state or cost at step " +
                             std::to_string(steps + t));
      rec.cost_return += r.cost;
      buffer.push({state.s, action, r.cost, r.next.s});
      state = std::move(r.next);
    }
    steps += len;
    ++episode;

    if (config.learning_enabled && buffer.size() >= warmup) {
      for (int u = 0; u < updates; ++u) {
        const Batch batch = buffer.sample(static_cast<std::size_t>(config.batch_size), batch_rng);
        const double closs = critic_update(batch, agent.critic, agent.targets.critic,
                                           agent.targets.policy, config.gamma, config.lr_lyapunov,
                                           critic_adam);
        const Matrix noise = gaussian_matrix(update_rng, spec.action_dim, config.batch_size);
        const PolicyObjective obj =
            policy_update(batch, agent.critic, agent.policy, agent.multipliers, config.mode, noise,
                          entropy_target, config.lr_actor, policy_adam, config.fixed_k);
        if (sac) {
          agent.multipliers = entropy_multiplier_update(agent.multipliers, obj.mean_log_prob,
                                                        entropy_target, config.lr_multipliers);
        } else {
          agent.multipliers =
              multiplier_update(agent.multipliers, obj.delta_l.mean, obj.mean_log_prob,
                                entropy_target, config.lr_multipliers, config.gamma);
          agent.multipliers.check(config.gamma);
        }
        polyak_update(agent.critic, agent.policy, agent.targets, config.polyak);

        if (!std::isfinite(closs) || !std::isfinite(obj.value) ||
            !agent.critic.net.flat().allFinite() || !agent.policy.net.flat().allFinite() ||
            !std::isfinite(agent.multipliers.lambda_e))
          throw NumericalError(dump_state("non-finite loss or parameter", batch, agent.multipliers,
                                          steps, episode));

        rec.critic_loss += closs;
        rec.policy_obj += obj.value;
        rec.mean_log_prob += obj.mean_log_prob;
        if (!sac) {
          rec.mean_delta_l += obj.delta_l.mean;
          rec.violation_rate += obj.delta_l.violation_rate;
          rec.pos_part_delta_l += obj.delta_l.positive_part;
        }
        ++rec.updates;
      }
      const double inv = 1.0 / rec.updates;
      for (double* x : {&rec.critic_loss, &rec.policy_obj, &rec.mean_log_prob, &rec.mean_delta_l,
                        &rec.violation_rate, &rec.pos_part_delta_l})
        *x *= inv;
    }

    rec.step = steps;
    rec.episode = episode;
    rec.lambda_l = agent.multipliers.lambda_l;
    rec.lambda_e = agent.multipliers.lambda_e;
    rec.lambda = agent.multipliers.lambda;
    rec.k = agent.multipliers.k;
    if (sink) sink(rec);
    result.metrics.push_back(rec);
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

void finish(EvalResult& r) {
  const auto n = static_cast<double>(r.cost_returns.size());
  if (r.cost_returns.empty()) return;
  double sum = 0.0;
  for (double x : r.cost_returns) sum += x;
  r.mean = sum / n;
  double ss = 0.0;
  for (double x : r.cost_returns) ss += (x - r.mean) * (x - r.mean);
  r.stddev = std::sqrt(ss / n);
}

}  // namespace

EvalResult eval_controller(const Env& env, const Controller& controller, int trials, RngStream& rng,
                           const Disturbance* disturbance, int episode_length) {
  require(trials >= 1, "eval: trials must be >= 1");
  const int len = episode_length > 0 ? episode_length : env.spec().horizon;
  EvalResult r;
  for (int trial = 0; trial < trials; ++trial) {
    EnvState state = env.reset(rng);
    double total = 0.0;
    std::vector<double> trace;
    trace.reserve(len);
    for (int t = 0; t < len; ++t) {
      StepResult sr = env.step(state, controller(state), disturbance);
      total += sr.cost;
      trace.push_back(sr.cost);
      state = std::move(sr.next);
    }
    r.cost_returns.push_back(total);
    r.cost_traces.push_back(std::move(trace));
  }
  finish(r);
  return r;
}

EvalResult eval_policy(const Env& env, const GaussianPolicy& policy, const LyapunovCritic* critic,
                       int trials, RngStream& rng, const Disturbance* disturbance, int episode_length) {
  require(trials >= 1, "eval_policy: trials must be >= 1");
  require(policy.state_dim() == env.spec().state_dim && policy.action_dim == env.spec().action_dim,
          "eval_policy: policy dimensions do not match the environment");
  if (critic != nullptr)
    require(critic->state_dim == env.spec().state_dim && critic->action_dim == env.spec().action_dim,
            "eval_policy: critic dimensions do not match the environment");
  const int len = episode_length > 0 ? episode_length : env.spec().horizon;
  EvalResult r;
  for (int trial = 0; trial < trials; ++trial) {
    EnvState state = env.reset(rng);
    double total = 0.0;
    std::vector<double> costs;
    std::vector<double> values;
    for (int t = 0; t < len; ++t) {
      const Matrix s = column(state.s);
      const Matrix a = policy_act(policy, s);
      if (critic != nullptr) values.push_back(critic_eval(*critic, s, a)[0]);
      StepResult sr = env.step(state, a.col(0), disturbance);
      total += sr.cost;
      costs.push_back(sr.cost);
      state = std::move(sr.next);
    }
    r.cost_returns.push_back(total);
    r.cost_traces.push_back(std::move(costs));
    r.lyapunov_traces.push_back(std::move(values));
  }
  finish(r);
  return r;
}

}  // namespace alac
