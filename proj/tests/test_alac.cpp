#include "alac/alac.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace alac;

namespace {

Transition item(double tag) {
  return {Vector::Constant(2, tag), Vector::Constant(1, tag), tag, Vector::Constant(2, -tag)};
}

struct Fixture {
  RngStream rng{101};
  LyapunovCritic critic;
  GaussianPolicy policy;
  Batch batch;

  explicit Fixture(int sd = 3, int ad = 2, int n = 16, std::uint64_t seed = 101) : rng(seed) {
    critic = make_critic(sd, ad, {12, 10, 6}, Vector::Zero(sd), rng);
    critic.eps = 0.05;
    policy = make_policy(sd, ad, {10, 8}, rng);
    policy.net.flat() = gaussian_draw(rng, static_cast<int>(policy.net.flat().size())) * 0.3;
    batch = oracle::random_batch(rng, sd, ad, n);
  }
};

// Environment that never costs anything.
class FreeEnv final : public Env {
 public:
  FreeEnv() { spec_ = {"free", 2, 1, 30, Vector::Constant(1, -1), Vector::Constant(1, 1)}; }
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(RngStream& rng) const override { return {gaussian_draw(rng, 2), 0}; }
  StepResult step(const EnvState& s, const Vector& a, const Disturbance*) const override {
    return {{s.s + Vector::Constant(2, a[0]), s.t + 1}, 0.0};
  }
  Vector equilibrium() const override { return Vector::Zero(2); }

 private:
  EnvSpec spec_;
};

TrainConfig small_config(long steps) {
  TrainConfig c;
  c.total_steps = steps;
  c.batch_size = 32;
  c.actor_hidden = {16, 16};
  c.critic_layers = {16, 16, 8};
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(ReplayBuffer, RingKeepsNewest) {
  ReplayBuffer buf(2);
  for (double t : {1.0, 2.0, 3.0}) buf.push(item(t));
  ASSERT_EQ(buf.size(), 2u);
  EXPECT_EQ(buf.insertions(), 3u);
  std::vector<double> tags{buf.at(0).c, buf.at(1).c};
  std::sort(tags.begin(), tags.end());
  EXPECT_EQ(tags, (std::vector<double>{2.0, 3.0}));
}

TEST(ReplayBuffer, DeterministicSample) {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push(item(i));
  RngStream a(5), b(5);
  const Batch x = buf.sample(10, a), y = buf.sample(10, b);
  EXPECT_EQ(x.s, y.s);
  EXPECT_EQ(x.c, y.c);
  EXPECT_EQ(x.s_next, -x.s);
}

TEST(ReplayBuffer, UniformFrequencies) {
  ReplayBuffer buf(10);
  for (int i = 0; i < 10; ++i) buf.push(item(i));
  RngStream rng(6);
  const int n = 100000;
  std::vector<int> counts(10, 0);
  for (int i = 0; i < n / 10; ++i) {
    const Batch b = buf.sample(10, rng);
    for (int j = 0; j < 10; ++j) ++counts[static_cast<int>(b.c[j])];
  }
  const double sigma = std::sqrt(n * 0.1 * 0.9);
  for (int c : counts) EXPECT_LT(std::abs(c - n * 0.1), 3 * sigma);
}

TEST(ReplayBuffer, UndersizedSampleThrows) {
  ReplayBuffer buf(4);
  RngStream rng(7);
  EXPECT_THROW(buf.sample(1, rng), ContractError);
  buf.push(item(1));
  EXPECT_THROW(buf.sample(2, rng), ContractError);
  EXPECT_THROW(buf.sample(0, rng), ContractError);
  EXPECT_THROW(ReplayBuffer(0), ContractError);
}

// ---------------------------------------------------------------------------

TEST(DeltaL, Arithmetic) {
  EXPECT_DOUBLE_EQ(delta_l_values(Vector::Ones(1), Vector::Ones(1), 0.5, 1.0, CertificationMode::Asc)[0], 0.0);
  EXPECT_NEAR(delta_l_values(Vector::Constant(1, 2.0), Vector::Ones(1), 0.5, 0.995, CertificationMode::Asc)[0],
              -0.4975, 1e-15);
  // Upper drops the subtrahend, Lower uses lambda = 1.
  EXPECT_NEAR(delta_l_values(Vector::Constant(1, 2.0), Vector::Ones(1), 0.5, 0.995, CertificationMode::Upper)[0],
              0.0, 1e-15);
  EXPECT_NEAR(delta_l_values(Vector::Constant(1, 2.0), Vector::Ones(1), 0.5, 0.995, CertificationMode::Lower)[0],
              -0.5, 1e-15);
  EXPECT_THROW(delta_l_values(Vector::Ones(1), Vector::Ones(1), 0.5, 1.0, CertificationMode::SacCost),
               ContractError);
}

TEST(DeltaL, ZeroKIsPlainDifference) {
  RngStream rng(8);
  const Vector l = gaussian_draw(rng, 50).cwiseAbs(), ln = gaussian_draw(rng, 50).cwiseAbs();
  for (double lam : {0.0, 0.3, 0.995}) {
    const Vector d = delta_l_values(l, ln, 0.0, lam, CertificationMode::Asc);
    EXPECT_LT((d - (ln - l)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(DeltaL, BoundedByOnePlusK) {
  RngStream rng(9);
  const double B = 3.0;
  for (int i = 0; i < 1000; ++i) {
    const double k = rng.uniform(), lam = rng.uniform();
    const Vector l = (gaussian_draw(rng, 8).array().abs().min(B)).matrix();
    const Vector ln = (gaussian_draw(rng, 8).array().abs().min(B)).matrix();
    for (auto m : {CertificationMode::Asc, CertificationMode::Upper, CertificationMode::Lower})
      EXPECT_LE(delta_l_values(l, ln, k, lam, m).cwiseAbs().maxCoeff(), (1 + k) * B + 1e-12);
  }
}

TEST(DeltaL, AblationOrdering) {
  for (int trial = 0; trial < 100; ++trial) {
    Fixture f(3, 2, 32, 200 + trial);
    const Multipliers m = Multipliers::initial(f.rng.uniform(), 1.0, 0.995);
    const Matrix noise = gaussian_matrix(f.rng, 2, 32);
    const double up = delta_l_batch(f.batch, f.critic, f.policy, m, CertificationMode::Upper, noise).mean;
    const double asc = delta_l_batch(f.batch, f.critic, f.policy, m, CertificationMode::Asc, noise).mean;
    const double lo = delta_l_batch(f.batch, f.critic, f.policy, m, CertificationMode::Lower, noise).mean;
    EXPECT_GE(up, asc);
    EXPECT_GE(asc, lo);
  }
}

TEST(DeltaL, BatchSummary) {
  Fixture f;
  const Multipliers m = Multipliers::initial(0.7, 1.0, 0.995);
  const Matrix noise = gaussian_matrix(f.rng, 2, 16);
  const DeltaLResult r = delta_l_batch(f.batch, f.critic, f.policy, m, CertificationMode::Asc, noise);
  const Vector lsa = critic_eval(f.critic, f.batch.s, f.batch.a);
  const Vector ln = critic_eval(f.critic, f.batch.s_next, policy_sample(f.policy, f.batch.s_next, noise).action);
  for (int j = 0; j < 16; ++j) {
    const double d = ln[j] - lsa[j] + m.k * (lsa[j] - m.lambda * ln[j]);
    EXPECT_NEAR(r.values[j], d, 1e-12 * std::max(1.0, std::abs(d)));
  }
  EXPECT_NEAR(r.mean, r.values.mean(), 1e-15);
  EXPECT_NEAR(r.positive_part, r.values.cwiseMax(0.0).mean(), 1e-15);
  EXPECT_EQ(r.violation_rate, (r.values.array() > 0).cast<double>().mean());
}

// ---------------------------------------------------------------------------

TEST(Critic, TdTargetArithmetic) {
  RngStream rng(10);
  LyapunovCritic tc = make_critic(1, 1, {4, 1}, Vector::Zero(1), rng);
  tc.net.flat().setZero();
  tc.net.bias(1)[0] = std::sqrt(2.0);
  GaussianPolicy tp = make_policy(1, 1, {4}, rng);
  Batch b{Matrix::Zero(1, 1), Matrix::Zero(1, 1), Vector::Ones(1), Matrix::Constant(1, 1, 1e9)};
  EXPECT_NEAR(td_targets(b, tc, tp, 0.995)[0], 2.99, 1e-9);
}

TEST(Critic, ZeroErrorMeansNoMovement) {
  Fixture f;
  const Vector targets = critic_eval(f.critic, f.batch.s, f.batch.a);
  const CriticLoss l = critic_loss(f.batch, f.critic, targets);
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_EQ(l.grad.flat().cwiseAbs().maxCoeff(), 0.0);
  const Vector before = f.critic.net.flat();
  AdamState adam(before.size());
  Vector& p = f.critic.net.flat();
  adam_step({p.data(), static_cast<std::size_t>(p.size())},
            {l.grad.flat().data(), static_cast<std::size_t>(l.grad.flat().size())}, adam, 1e-3);
  EXPECT_EQ(f.critic.net.flat(), before);
}

TEST(Critic, LossGradientMatchesFiniteDifferences) {
  Fixture f;
  const Vector targets = gaussian_draw(f.rng, 16).cwiseAbs();
  const CriticLoss l = critic_loss(f.batch, f.critic, targets);
  Vector flat = f.critic.net.flat();
  const Vector fd = oracle::central_diff(flat, [&] {
    f.critic.net.flat() = flat;
    return critic_loss(f.batch, f.critic, targets).loss;
  });
  EXPECT_EQ(oracle::count_mismatches(l.grad.flat(), fd), 0);
}

TEST(Critic, OverfitsOneBatch) {
  Fixture f(3, 2, 64, 11);
  const LyapunovCritic target = f.critic;
  GaussianPolicy tp = f.policy;
  AdamState adam(f.critic.net.flat().size());
  std::vector<double> losses;
  for (int i = 0; i < 500; ++i)
    losses.push_back(critic_update(f.batch, f.critic, target, tp, 0.995, 3e-3, adam));
  for (std::size_t i = 11; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1] * (1 + 1e-3)) << i;
  EXPECT_LT(losses.back(), 0.01 * losses.front());
}

TEST(Critic, TinyStepDescends) {
  for (int trial = 0; trial < 100; ++trial) {
    Fixture f(3, 2, 16, 300 + trial);
    const Vector targets = td_targets(f.batch, f.critic, f.policy, 0.995);
    const double before = critic_loss(f.batch, f.critic, targets).loss;
    AdamState adam(f.critic.net.flat().size());
    critic_update(f.batch, f.critic, f.critic, f.policy, 0.995, 1e-6, adam);
    EXPECT_LE(critic_loss(f.batch, f.critic, targets).loss, before);
  }
}

// ---------------------------------------------------------------------------

TEST(Policy, ZeroMultipliersGiveZeroGradient) {
  Fixture f;
  Multipliers m = Multipliers::initial(0.0, 0.0, 0.995);
  const Matrix noise = gaussian_matrix(f.rng, 2, 16);
  const Vector before = f.policy.net.flat();
  AdamState adam(before.size());
  const PolicyObjective obj =
      policy_update(f.batch, f.critic, f.policy, m, CertificationMode::Asc, noise, -2.0, 1e-3, adam);
  EXPECT_EQ(obj.grad.flat().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.policy.net.flat(), before);
}

TEST(Policy, CertificationGradientIsLinearInLambdaL) {
  Fixture f;
  const Matrix noise = gaussian_matrix(f.rng, 2, 16);
  Multipliers m1 = Multipliers::initial(0.3, 0.0, 0.995);
  Multipliers m2 = m1;
  m2.lambda_l = 0.6;  // k and lambda held fixed so only the weight changes
  const Vector g1 = policy_objective(f.batch, f.critic, f.policy, m1, CertificationMode::Asc, noise, -2).grad.flat();
  const Vector g2 = policy_objective(f.batch, f.critic, f.policy, m2, CertificationMode::Asc, noise, -2).grad.flat();
  EXPECT_LT((g2 - 2.0 * g1).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, g2.cwiseAbs().maxCoeff()));
}

TEST(Policy, ObjectiveGradientMatchesFiniteDifferences) {
  for (int trial = 0; trial < 30; ++trial) {
    Fixture f(2, 1 + trial % 2, 8, 400 + trial);
    const Multipliers m = Multipliers::initial(f.rng.uniform(0.2, 1.0), f.rng.uniform(0.1, 2.0), 0.995);
    const Matrix noise = gaussian_matrix(f.rng, f.policy.action_dim, 8);
    const auto mode = trial % 3 == 0 ? CertificationMode::SacCost : CertificationMode::Asc;
    EXPECT_EQ(oracle::policy_objective_fd_mismatches(f.batch, f.critic, f.policy, m, mode, noise, -1.0), 0)
        << "trial " << trial;
  }
}

TEST(Policy, SacCostIgnoresCertificationMultipliers) {
  Fixture f;
  const Matrix noise = gaussian_matrix(f.rng, 2, 16);
  Multipliers a = Multipliers::initial(1.0, 0.5, 0.995);
  Multipliers b = a;
  b.lambda_l = 0.1;
  b.lambda = 0.1;
  b.k = 0.9;
  const PolicyObjective x = policy_objective(f.batch, f.critic, f.policy, a, CertificationMode::SacCost, noise, -2);
  const PolicyObjective y = policy_objective(f.batch, f.critic, f.policy, b, CertificationMode::SacCost, noise, -2);
  EXPECT_EQ(x.value, y.value);
  EXPECT_EQ(x.grad.flat(), y.grad.flat());
  EXPECT_EQ(x.delta_l.values.size(), 0);
  const Multipliers e = entropy_multiplier_update(b, -1.0, -2.0, 0.1);
  EXPECT_EQ(e.lambda_l, b.lambda_l);
  EXPECT_EQ(e.k, b.k);
}

// ---------------------------------------------------------------------------

TEST(Multipliers, DualStepArithmetic) {
  const Multipliers m = multiplier_update(Multipliers::initial(0.5, 1.0, 0.995), -1.0, 0.0, 0.0, 0.1, 0.995);
  EXPECT_DOUBLE_EQ(m.lambda_l, 0.4);
  EXPECT_DOUBLE_EQ(m.lambda, 0.4);
  EXPECT_DOUBLE_EQ(m.k, 0.6);
}

TEST(Multipliers, ClipAndMinEndpoints) {
  const Multipliers m = multiplier_update(Multipliers::initial(0.99, 1.0, 0.995), 1.0, 0.0, 0.0, 0.1, 0.995);
  EXPECT_EQ(m.lambda_l, 1.0);
  EXPECT_EQ(m.lambda, 0.995);
  EXPECT_EQ(m.k, 0.0);
  const Multipliers z = multiplier_update(Multipliers::initial(0.05, 0.01, 0.995), -10.0, -50.0, 1.0, 0.1, 0.995);
  EXPECT_EQ(z.lambda_l, 0.0);
  EXPECT_EQ(z.lambda_e, 0.0);
  EXPECT_EQ(z.k, 1.0);
  EXPECT_NO_THROW(z.check(0.995));
}

TEST(Multipliers, StationaryEntropy) {
  const Multipliers m0 = Multipliers::initial(0.8, 0.7, 0.995);
  const Multipliers m = multiplier_update(m0, 0.0, -2.0, 2.0, 0.1, 0.995);
  EXPECT_EQ(m.lambda_e, 0.7);
}

TEST(Multipliers, CheckRejectsBrokenState) {
  Multipliers m = Multipliers::initial(0.5, 1.0, 0.995);
  m.k = 0.4;
  EXPECT_THROW(m.check(0.995), NumericalError);
}

// ---------------------------------------------------------------------------

TEST(Train, ZeroStepsReturnsInitialNetworks) {
  LinTrackEnv env;
  TrainConfig c = small_config(0);
  const TrainResult r = train(c, env, 3);
  EXPECT_TRUE(r.metrics.empty());
  RngStream init = RngStream(3).derive(1);
  const Agent fresh = make_agent(c, env, init);
  EXPECT_EQ(r.agent.policy.net.flat(), fresh.policy.net.flat());
  EXPECT_EQ(r.agent.critic.net.flat(), fresh.critic.net.flat());
  EXPECT_EQ(r.agent.targets.critic.net.flat(), fresh.critic.net.flat());
}

TEST(Train, SameSeedIsBitwiseIdentical) {
  LinTrackEnv env;
  const TrainConfig c = small_config(1500);
  std::ostringstream a, b;
  const TrainResult x = train(c, env, 9, [&](const MetricsRecord& r) { a << metrics_row(r) << '\n'; });
  const TrainResult y = train(c, env, 9, [&](const MetricsRecord& r) { b << metrics_row(r) << '\n'; });
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(x.agent.policy.net.flat(), y.agent.policy.net.flat());
  const TrainResult z = train(c, env, 10);
  EXPECT_NE(x.agent.policy.net.flat(), z.agent.policy.net.flat());
}

TEST(Train, MultiplierInvariantsEveryEpisode) {
  LinTrackEnv env;
  for (auto mode : {CertificationMode::Asc, CertificationMode::Upper, CertificationMode::Lower,
                    CertificationMode::FixedK}) {
    TrainConfig c = small_config(2000);
    c.mode = mode;
    const TrainResult r = train(c, env, 4);
    ASSERT_EQ(r.metrics.size(), 20u);
    for (const auto& m : r.metrics) {
      EXPECT_GE(m.lambda_l, 0.0);
      EXPECT_LE(m.lambda_l, 1.0);
      EXPECT_EQ(m.lambda, std::min(m.lambda_l, c.gamma));
      EXPECT_EQ(m.k, 1.0 - m.lambda_l);
      EXPECT_GE(m.lambda_e, 0.0);
    }
    // Warm-up is five batches: updates start after episode 2.
    EXPECT_EQ(r.metrics[0].updates, 0);
    EXPECT_EQ(r.metrics[1].updates, 100);
  }
}

TEST(Train, SacCostLeavesCertificationAlone) {
  LinTrackEnv env;
  TrainConfig c = small_config(1000);
  c.mode = CertificationMode::SacCost;
  const TrainResult r = train(c, env, 4);
  for (const auto& m : r.metrics) {
    EXPECT_EQ(m.lambda_l, 1.0);
    EXPECT_EQ(m.mean_delta_l, 0.0);
  }
}

TEST(Train, LogsOneRecordPerEpisode) {
  LinTrackEnv env;
  TrainConfig c = small_config(250);
  c.learning_enabled = false;
  const TrainResult r = train(c, env, 1);
  ASSERT_EQ(r.metrics.size(), 3u);
  EXPECT_EQ(r.metrics.back().step, 250);
  EXPECT_EQ(r.metrics.back().episode, 3);
  EXPECT_EQ(r.metrics.back().updates, 0);
}

TEST(Train, InvalidConfigRejected) {
  LinTrackEnv env;
  TrainConfig c = small_config(10);
  c.gamma = 1.5;
  EXPECT_THROW(train(c, env, 1), ContractError);
  c = small_config(10);
  c.lr_actor = 0.0;
  EXPECT_THROW(train(c, env, 1), ContractError);
}

TEST(Metrics, HeaderOrder) {
  EXPECT_EQ(metrics_header(),
            "step,episode,cost_return,mean_delta_l,violation_rate,pos_part_delta_l,lambda_l,lambda_e,"
            "lambda,k,critic_loss,policy_obj,mean_log_prob");
  MetricsRecord r;
  r.step = 7;
  r.cost_return = 0.5;
  const std::string row = metrics_row(r);
  EXPECT_EQ(row.substr(0, 6), "7,0,0.");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 12);
}

TEST(Modes, NamesRoundTrip) {
  for (auto m : {CertificationMode::Asc, CertificationMode::Upper, CertificationMode::Lower,
                 CertificationMode::FixedK, CertificationMode::SacCost})
    EXPECT_EQ(mode_from_string(to_string(m)), m);
  EXPECT_THROW(mode_from_string("ppo"), ContractError);
}

// ---------------------------------------------------------------------------

TEST(Eval, ZeroCostEnvironment) {
  FreeEnv env;
  RngStream rng(12);
  GaussianPolicy p = make_policy(2, 1, {8}, rng);
  const EvalResult r = eval_policy(env, p, nullptr, 5, rng);
  for (double x : r.cost_returns) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(r.mean, 0.0);
}

TEST(Eval, RepeatableTraces) {
  LinTrackEnv env;
  RngStream init(13);
  GaussianPolicy p = make_policy(2, 1, {8}, init);
  LyapunovCritic c = make_critic(2, 1, {8, 4}, Vector::Zero(2), init);
  RngStream a(14), b(14);
  const EvalResult x = eval_policy(env, p, &c, 1, a);
  const EvalResult y = eval_policy(env, p, &c, 1, b);
  EXPECT_EQ(x.cost_traces, y.cost_traces);
  EXPECT_EQ(x.lyapunov_traces, y.lyapunov_traces);
  ASSERT_EQ(x.lyapunov_traces[0].size(), 100u);
  for (double v : x.lyapunov_traces[0]) EXPECT_GE(v, 0.0);
}

TEST(Eval, ScriptedControllerMatchesDirectRollout) {
  LinTrackEnv env;
  const Controller pd = [](const EnvState& s) { return Vector::Constant(1, -(2.0 * s.s[0] + 2.5 * s.s[1])); };
  RngStream rng(15);
  const EvalResult r = eval_controller(env, pd, 3, rng);
  RngStream again(15);
  for (int trial = 0; trial < 3; ++trial) {
    EnvState s = env.reset(again);
    double total = 0;
    for (int t = 0; t < 100; ++t) {
      const StepResult sr = lintrack_step(s, pd(s), env.params());
      total += sr.cost;
      s = sr.next;
    }
    EXPECT_NEAR(r.cost_returns[trial], total, 1e-12);
  }
}

TEST(Eval, RejectsMismatchedPolicy) {
  LinTrackEnv env;
  RngStream rng(16);
  GaussianPolicy p = make_policy(4, 1, {8}, rng);
  EXPECT_THROW(eval_policy(env, p, nullptr, 1, rng), ContractError);
  EXPECT_THROW(eval_policy(env, make_policy(2, 1, {8}, rng), nullptr, 0, rng), ContractError);
}

TEST(Eval, DisturbanceChangesOutcome) {
  LinTrackEnv env;
  RngStream init(17);
  GaussianPolicy p = make_policy(2, 1, {8}, init);
  const Disturbance d{0.5, 50, Waveform::Sine};
  RngStream a(18), b(18);
  const EvalResult clean = eval_policy(env, p, nullptr, 2, a);
  const EvalResult pushed = eval_policy(env, p, nullptr, 2, b, &d);
  EXPECT_NE(clean.cost_returns, pushed.cost_returns);
}
