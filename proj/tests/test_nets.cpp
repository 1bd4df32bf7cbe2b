#include "alac/nets.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace alac;

namespace {

void expect_grad_close(double analytic, double numeric, const char* what, int idx) {
  const double tol = std::max(1e-6, 1e-4 * std::max(std::abs(analytic), std::abs(numeric)));
  EXPECT_NEAR(analytic, numeric, tol) << what << " entry " << idx;
}

// Central difference of f over every entry of x.
Vector central_diff(Vector& x, const std::function<double()>& f, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double dn = f();
    x[i] = keep;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

MlpSpec random_spec(RngStream& rng, Activation hidden) {
  MlpSpec spec;
  spec.layer_sizes.push_back(1 + static_cast<int>(rng.below(5)));
  const int depth = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < depth; ++i) {
    spec.layer_sizes.push_back(2 + static_cast<int>(rng.below(6)));
    spec.activations.push_back(hidden);
  }
  spec.layer_sizes.push_back(1 + static_cast<int>(rng.below(4)));
  spec.activations.push_back(Activation::Identity);
  return spec;
}

MlpParams random_params(const MlpSpec& spec, RngStream& rng) {
  MlpParams p(spec);
  p.flat() = gaussian_draw(rng, static_cast<int>(p.flat().size())) * 0.7;
  return p;
}

// Straight-line evaluator used as an oracle for the forward pass.
Vector naive_eval(const MlpParams& p, const Vector& x) {
  Vector z = x;
  for (int l = 0; l < p.spec().num_layers(); ++l) {
    const auto W = p.weight(l);
    const auto b = p.bias(l);
    Vector next(W.rows());
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      double acc = b[i];
      for (Eigen::Index j = 0; j < W.cols(); ++j) acc += W(i, j) * z[j];
      switch (p.spec().activations[l]) {
        case Activation::Relu: acc = acc > 0 ? acc : 0.0; break;
        case Activation::Tanh: acc = std::tanh(acc); break;
        case Activation::Identity: break;
      }
      next[i] = acc;
    }
    z = next;
  }
  return z;
}

}  // namespace

TEST(MlpSpec, Validation) {
  MlpSpec bad{{3}, {}};
  EXPECT_THROW(bad.validate(), ContractError);
  MlpSpec mismatch{{3, 4, 2}, {Activation::Relu}};
  EXPECT_THROW(mismatch.validate(), ContractError);
  MlpSpec ok{{3, 4, 2}, {Activation::Relu, Activation::Identity}};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_EQ(ok.parameter_count(), 4 * 4 + 2 * 5);
  EXPECT_EQ(activation_from_string(to_string(Activation::Tanh)), Activation::Tanh);
  EXPECT_THROW(activation_from_string("gelu"), ContractError);
}

TEST(MlpForward, ZeroParamsGiveZeroOutput) {
  MlpParams p(MlpSpec{{3, 5, 2}, {Activation::Tanh, Activation::Identity}});
  RngStream rng(1);
  const Matrix x = gaussian_matrix(rng, 3, 4);
  EXPECT_EQ(mlp_forward(p, x).output, Matrix::Zero(2, 4));
}

TEST(MlpForward, SingleIdentityLayerIsAffine) {
  RngStream rng(2);
  MlpParams p = random_params(MlpSpec{{4, 3}, {Activation::Identity}}, rng);
  const Vector z = gaussian_draw(rng, 4);
  const Vector expect = affine_forward(Matrix(p.weight(0)), Vector(p.bias(0)), z);
  EXPECT_LT((mlp_forward(p, z).output.col(0) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MlpForward, MatchesStraightLineEvaluator) {
  RngStream rng(3);
  MlpSpec spec{{5, 8, 6, 3}, {Activation::Relu, Activation::Relu, Activation::Identity}};
  MlpParams p = random_params(spec, rng);
  const Matrix x = gaussian_matrix(rng, 5, 20);
  const Matrix out = mlp_forward(p, x).output;
  const Matrix out2 = mlp_eval(p, x);
  for (int j = 0; j < 20; ++j) {
    const Vector ref = naive_eval(p, x.col(j));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(out(i, j), ref[i], 1e-12 * std::max(1.0, std::abs(ref[i])));
  }
  EXPECT_EQ(out, out2);
  EXPECT_EQ(out, mlp_forward(p, x).output);
}

TEST(MlpForward, RejectsBadInput) {
  MlpParams p(MlpSpec{{3, 2}, {Activation::Identity}});
  EXPECT_THROW(mlp_forward(p, Matrix::Zero(4, 1)), ContractError);
}

TEST(MlpBackward, LinearInputGradIsTransposeTimesUpstream) {
  RngStream rng(4);
  MlpParams p = random_params(MlpSpec{{4, 3}, {Activation::Identity}}, rng);
  const Matrix x = gaussian_matrix(rng, 4, 1);
  const MlpForward fwd = mlp_forward(p, x);
  const Matrix g = gaussian_matrix(rng, 3, 1);
  const MlpGradients grads = mlp_backward(p, fwd.cache, g);
  EXPECT_EQ(grads.input, Matrix(p.weight(0).transpose() * g));
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  RngStream rng(5);
  MlpParams p = random_params(MlpSpec{{3, 6, 2}, {Activation::Tanh, Activation::Identity}}, rng);
  const MlpForward fwd = mlp_forward(p, gaussian_matrix(rng, 3, 7));
  const MlpGradients g = mlp_backward(p, fwd.cache, Matrix::Zero(2, 7));
  EXPECT_EQ(g.params.flat().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.input.cwiseAbs().maxCoeff(), 0.0);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  RngStream rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Activation hidden = trial % 2 == 0 ? Activation::Relu : Activation::Tanh;
    MlpParams p = random_params(random_spec(rng, hidden), rng);
    const int batch = 1 + static_cast<int>(rng.below(3));
    Matrix x = gaussian_matrix(rng, p.spec().input_dim(), batch);
    const Matrix upstream = gaussian_matrix(rng, p.spec().output_dim(), batch);

    const MlpForward fwd = mlp_forward(p, x);
    const MlpGradients g = mlp_backward(p, fwd.cache, upstream);
    auto objective = [&] { return (mlp_eval(p, x).array() * upstream.array()).sum(); };

    Vector flat = p.flat();
    const Vector fd = central_diff(flat, [&] {
      p.flat() = flat;
      return objective();
    });
    p.flat() = flat;
    for (Eigen::Index i = 0; i < fd.size(); ++i) expect_grad_close(g.params.flat()[i], fd[i], "param", i);

    Vector xin = x.reshaped();
    const Vector fdx = central_diff(xin, [&] {
      x = xin.reshaped(x.rows(), x.cols());
      return objective();
    });
    const Vector gin = g.input.reshaped();
    for (Eigen::Index i = 0; i < fdx.size(); ++i) expect_grad_close(gin[i], fdx[i], "input", i);
  }
}

TEST(MlpBackward, RejectsStaleCache) {
  RngStream rng(7);
  MlpParams p = random_params(MlpSpec{{2, 3, 1}, {Activation::Relu, Activation::Identity}}, rng);
  const MlpForward fwd = mlp_forward(p, gaussian_matrix(rng, 2, 1));
  p.weight(0)(0, 0) += 1.0;
  EXPECT_THROW(mlp_backward(p, fwd.cache, Matrix::Ones(1, 1)), ContractError);
  MlpParams other = p;
  const MlpForward fwd2 = mlp_forward(p, gaussian_matrix(rng, 2, 1));
  EXPECT_THROW(mlp_backward(other, fwd2.cache, Matrix::Ones(1, 1)), ContractError);
}

TEST(Orthogonal, MakeMlpUsesGains) {
  RngStream rng(8);
  const MlpParams p = make_mlp(MlpSpec{{4, 4, 4}, {Activation::Relu, Activation::Identity}}, rng, 1.0, 0.01);
  const Matrix w0 = p.weight(0), w1 = p.weight(1);
  EXPECT_LT((w0.transpose() * w0 - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((w1.transpose() * w1 - 1e-4 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(Vector(p.bias(0)), Vector::Zero(4));
}

// ---------------------------------------------------------------------------

TEST(Policy, ClampedLogStdIsNearDeterministic) {
  RngStream rng(10);
  GaussianPolicy pol = make_policy(3, 2, {16, 16}, rng);
  const int last = pol.net.spec().num_layers() - 1;
  pol.net.weight(last).bottomRows(2).setZero();
  pol.net.bias(last).tail(2).setConstant(-40.0);
  const Matrix s = gaussian_matrix(rng, 3, 10);
  const PolicySample smp = policy_sample(pol, s, rng);
  EXPECT_LT((smp.action - smp.mean.array().tanh().matrix()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(smp.cache.log_std, Matrix::Constant(2, 10, -20.0));
  EXPECT_EQ(policy_act(pol, s), policy_deterministic(pol, s).action);
}

TEST(Policy, SymmetricSamplesHaveZeroMean) {
  RngStream rng(11);
  GaussianPolicy pol = make_policy(1, 1, {8}, rng);
  pol.net.flat().setZero();  // mean 0, log-std 0
  const int n = 100000;
  const PolicySample smp = policy_sample(pol, Matrix::Zero(1, n), rng);
  EXPECT_LT(std::abs(smp.action.mean()), 0.01);
  EXPECT_LT(smp.action.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Policy, DensityIntegratesToOne) {
  RngStream rng(12);
  GaussianPolicy pol = make_policy(2, 1, {16}, rng);
  const int last = pol.net.spec().num_layers() - 1;
  pol.net.bias(last)[0] = 0.3;
  pol.net.bias(last)[1] = -0.4;
  const Matrix s = gaussian_matrix(rng, 2, 1);
  const PolicySample probe = policy_deterministic(pol, s);
  const double mu = probe.mean(0, 0);
  const double sig = probe.cache.std(0, 0);

  // Midpoint rule over the action interval; the noise reproducing each grid
  // action is xi = (atanh(a) - mu) / sigma.
  const int n = 200000;
  const double h = 2.0 / n;
  Matrix noise(1, n);
  for (int i = 0; i < n; ++i) {
    const double a = -1.0 + (i + 0.5) * h;
    noise(0, i) = (std::atanh(a) - mu) / sig;
  }
  const PolicySample smp = policy_sample(pol, s.replicate(1, n), noise);
  const double total = smp.log_prob.array().exp().sum() * h;
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(Policy, LogProbStableForSaturatedActions) {
  RngStream rng(13);
  GaussianPolicy pol = make_policy(1, 1, {4}, rng);
  const PolicySample smp = policy_sample(pol, Matrix::Zero(1, 1), Matrix::Constant(1, 1, 40.0));
  EXPECT_TRUE(std::isfinite(smp.log_prob[0]));
}

TEST(Policy, GradientsMatchFiniteDifferences) {
  RngStream rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const int sd = 1 + static_cast<int>(rng.below(4));
    const int ad = 1 + static_cast<int>(rng.below(3));
    GaussianPolicy pol = make_policy(sd, ad, {6, 5}, rng);
    pol.net.flat() = gaussian_draw(rng, static_cast<int>(pol.net.flat().size())) * 0.4;
    const int batch = 2;
    Matrix s = gaussian_matrix(rng, sd, batch);
    const Matrix noise = gaussian_matrix(rng, ad, batch);
    const Matrix ga = gaussian_matrix(rng, ad, batch);
    const Vector glp = gaussian_draw(rng, batch);

    const PolicySample smp = policy_sample(pol, s, noise);
    const PolicyGradients g = policy_backward(pol, smp.cache, ga, glp);
    auto objective = [&] {
      const PolicySample x = policy_sample(pol, s, noise);
      return (x.action.array() * ga.array()).sum() + x.log_prob.dot(glp);
    };
    Vector flat = pol.net.flat();
    const Vector fd = central_diff(flat, [&] {
      pol.net.flat() = flat;
      return objective();
    });
    pol.net.flat() = flat;
    for (Eigen::Index i = 0; i < fd.size(); ++i) expect_grad_close(g.params.flat()[i], fd[i], "policy param", i);

    Vector sin = s.reshaped();
    const Vector fds = central_diff(sin, [&] {
      s = sin.reshaped(s.rows(), s.cols());
      return objective();
    });
    const Vector gs = g.state.reshaped();
    for (Eigen::Index i = 0; i < fds.size(); ++i) expect_grad_close(gs[i], fds[i], "state", i);
  }
}

TEST(Policy, DeterministicMeanBiasGradient) {
  RngStream rng(15);
  GaussianPolicy pol = make_policy(3, 2, {8}, rng);
  pol.net.flat() = gaussian_draw(rng, static_cast<int>(pol.net.flat().size())) * 0.5;
  const Matrix s = gaussian_matrix(rng, 3, 1);
  const PolicySample smp = policy_deterministic(pol, s);
  const int last = pol.net.spec().num_layers() - 1;
  for (int i = 0; i < 2; ++i) {
    Matrix ga = Matrix::Zero(2, 1);
    ga(i, 0) = 1.0;
    const PolicyGradients g = policy_backward(pol, smp.cache, ga, Vector::Zero(1));
    const Vector bias_grad = g.params.bias(last);
    const double t = std::tanh(smp.mean(i, 0));
    EXPECT_DOUBLE_EQ(bias_grad[i], 1.0 - t * t);
    EXPECT_EQ(bias_grad[1 - i], 0.0);
    EXPECT_EQ(bias_grad.tail(2).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Policy, ClampedLogStdGetsNoGradient) {
  RngStream rng(16);
  GaussianPolicy pol = make_policy(2, 1, {4}, rng);
  const int last = pol.net.spec().num_layers() - 1;
  pol.net.weight(last).row(1).setZero();
  pol.net.bias(last)[1] = 5.0;  // above the upper clamp
  const Matrix s = gaussian_matrix(rng, 2, 3);
  const PolicySample smp = policy_sample(pol, s, rng);
  EXPECT_EQ(smp.cache.log_std, Matrix::Constant(1, 3, 2.0));
  const PolicyGradients g = policy_backward(pol, smp.cache, Matrix::Ones(1, 3), Vector::Ones(3));
  EXPECT_EQ(g.params.bias(last)[1], 0.0);
  EXPECT_EQ(Vector(g.params.weight(last).row(1).transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Policy, RejectsForeignCache) {
  RngStream rng(17);
  GaussianPolicy a = make_policy(2, 1, {4}, rng), b = make_policy(2, 1, {4}, rng);
  const PolicySample smp = policy_sample(a, Matrix::Zero(2, 1), rng);
  EXPECT_THROW(policy_backward(b, smp.cache, Matrix::Ones(1, 1), Vector::Ones(1)), ContractError);
}

// ---------------------------------------------------------------------------

TEST(GsTransform, ScalingExamples) {
  const double eps = 1e-6;
  const Vector f{{3.0, -4.0}};
  EXPECT_EQ(gs_transform(f, Vector::Zero(3), eps), Vector::Zero(2));
  EXPECT_LT((gs_transform(f, Vector{{0.5e-6, -0.5e-6}}, eps) - f / 2).cwiseAbs().maxCoeff(), 1e-15);
  const Vector big = gs_transform(f, Vector{{1.0, 0.0}}, eps);
  EXPECT_LT((big - f).norm() / f.norm(), 1e-6);
  EXPECT_THROW(gs_transform(f, f, 0.0), ContractError);
}

TEST(GsTransform, NormNeverGrows) {
  RngStream rng(20);
  for (int i = 0; i < 1000; ++i) {
    const Vector f = gaussian_draw(rng, 5);
    const Vector d = gaussian_draw(rng, 3) * std::pow(10.0, rng.uniform(-9, 1));
    EXPECT_LE(gs_transform(f, d, 1e-6).norm(), f.norm());
  }
}

TEST(Critic, ZeroAtEquilibriumForAnyAction) {
  RngStream rng(21);
  const Vector se{{0.5, -1.0, 2.0}};
  LyapunovCritic c = make_critic(3, 2, {16, 16, 8}, se, rng);
  const Matrix a = gaussian_matrix(rng, 2, 50);
  const Vector v = critic_eval(c, se.replicate(1, 50), a);
  EXPECT_EQ(v, Vector::Zero(50));
}

TEST(Critic, UnitOutputGivesOne) {
  RngStream rng(22);
  LyapunovCritic c = make_critic(2, 1, {4, 3}, Vector::Zero(2), rng);
  c.net.flat().setZero();
  c.net.bias(1)[0] = 1.0;
  const Vector v = critic_eval(c, Matrix::Constant(2, 1, 1e9), Matrix::Zero(1, 1));
  EXPECT_NEAR(v[0], 1.0, 1e-12);
}

TEST(Critic, NonNegativeEverywhere) {
  RngStream rng(23);
  LyapunovCritic c = make_critic(4, 2, {32, 32, 16}, Vector::Zero(4), rng, Activation::Tanh);
  const Vector v = critic_eval(c, gaussian_matrix(rng, 4, 10000) * 3.0, gaussian_matrix(rng, 2, 10000));
  EXPECT_GE(v.minCoeff(), 0.0);
  EXPECT_TRUE(all_finite(v));
}

TEST(Critic, MaskIgnoresCoordinates) {
  RngStream rng(24);
  LyapunovCritic c = make_critic(3, 1, {8, 4}, Vector::Zero(3), rng, Activation::Relu,
                                 Vector{{0.0, 1.0, 0.0}});
  Matrix s(3, 1);
  s << 5.0, 0.0, -7.0;
  EXPECT_EQ(critic_eval(c, s, Matrix::Ones(1, 1))[0], 0.0);
}

TEST(Critic, GradientsMatchFiniteDifferences) {
  RngStream rng(25);
  for (int trial = 0; trial < 30; ++trial) {
    const int sd = 1 + static_cast<int>(rng.below(4));
    const int ad = 1 + static_cast<int>(rng.below(3));
    const Activation hidden = trial % 2 ? Activation::Tanh : Activation::Relu;
    LyapunovCritic c = make_critic(sd, ad, {7, 6, 4}, gaussian_draw(rng, sd), rng, hidden);
    c.eps = 0.05;  // keeps the scaling factor well away from 1
    c.net.flat() = gaussian_draw(rng, static_cast<int>(c.net.flat().size())) * 0.6;
    const int batch = 3;
    const Matrix s = gaussian_matrix(rng, sd, batch) * 0.1;
    Matrix a = gaussian_matrix(rng, ad, batch);
    const Vector up = gaussian_draw(rng, batch);

    const CriticEval ev = critic_value(c, s, a);
    const CriticGradients g = critic_backward(c, ev.cache, up);
    auto objective = [&] { return critic_eval(c, s, a).dot(up); };

    Vector flat = c.net.flat();
    const Vector fd = central_diff(flat, [&] {
      c.net.flat() = flat;
      return objective();
    });
    c.net.flat() = flat;
    for (Eigen::Index i = 0; i < fd.size(); ++i) expect_grad_close(g.params.flat()[i], fd[i], "critic param", i);

    Vector av = a.reshaped();
    const Vector fda = central_diff(av, [&] {
      a = av.reshaped(a.rows(), a.cols());
      return objective();
    });
    const Vector ga = g.action.reshaped();
    for (Eigen::Index i = 0; i < fda.size(); ++i) expect_grad_close(ga[i], fda[i], "action", i);
  }
}

TEST(Critic, ActionGradientVanishesAtEquilibrium) {
  RngStream rng(26);
  const Vector se{{1.0, 2.0}};
  LyapunovCritic c = make_critic(2, 2, {8, 4}, se, rng);
  const CriticEval ev = critic_value(c, se.replicate(1, 4), gaussian_matrix(rng, 2, 4));
  const CriticGradients g = critic_backward(c, ev.cache, Vector::Ones(4));
  EXPECT_EQ(g.action.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.params.flat().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Critic, ZeroUpstreamGivesZeroGradients) {
  RngStream rng(27);
  LyapunovCritic c = make_critic(2, 1, {8, 4}, Vector::Zero(2), rng);
  const CriticEval ev = critic_value(c, gaussian_matrix(rng, 2, 5), gaussian_matrix(rng, 1, 5));
  const CriticGradients g = critic_backward(c, ev.cache, Vector::Zero(5));
  EXPECT_EQ(g.action.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.params.flat().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Critic, RejectsBadShapes) {
  RngStream rng(28);
  LyapunovCritic c = make_critic(2, 1, {4}, Vector::Zero(2), rng);
  EXPECT_THROW(critic_eval(c, Matrix::Zero(3, 1), Matrix::Zero(1, 1)), ContractError);
  EXPECT_THROW(critic_eval(c, Matrix::Zero(2, 2), Matrix::Zero(1, 1)), ContractError);
  EXPECT_THROW(make_critic(2, 1, {4}, Vector::Zero(3), rng), ContractError);
}

// ---------------------------------------------------------------------------

TEST(Polyak, Endpoints) {
  RngStream rng(30);
  const MlpSpec spec{{3, 4, 2}, {Activation::Relu, Activation::Identity}};
  const MlpParams online = random_params(spec, rng);
  MlpParams target = random_params(spec, rng);
  const Vector before = target.flat();
  polyak_update(online, target, 0.0);
  EXPECT_EQ(target.flat(), before);
  polyak_update(online, target, 1.0);
  EXPECT_EQ(target.flat(), online.flat());
}

TEST(Polyak, ScalarArithmetic) {
  MlpParams online(MlpSpec{{1, 1}, {Activation::Identity}});
  MlpParams target = MlpParams::zeros_like(online);
  online.flat().setOnes();
  polyak_update(online, target, 0.005);
  EXPECT_DOUBLE_EQ(target.flat()[0], 0.005);
}

TEST(Polyak, ConvexCombination) {
  RngStream rng(31);
  const MlpSpec spec{{5, 6, 3}, {Activation::Tanh, Activation::Identity}};
  const MlpParams online = random_params(spec, rng);
  MlpParams target = random_params(spec, rng);
  const Vector before = target.flat();
  polyak_update(online, target, 0.3);
  for (Eigen::Index i = 0; i < before.size(); ++i) {
    EXPECT_GE(target.flat()[i], std::min(before[i], online.flat()[i]));
    EXPECT_LE(target.flat()[i], std::max(before[i], online.flat()[i]));
  }
  EXPECT_THROW(polyak_update(online, target, 1.5), ContractError);
  MlpParams other(MlpSpec{{5, 3}, {Activation::Identity}});
  EXPECT_THROW(polyak_update(online, other, 0.5), ContractError);
}

TEST(Polyak, UpdatesBothTargets) {
  RngStream rng(32);
  LyapunovCritic c = make_critic(2, 1, {4, 3}, Vector::Zero(2), rng);
  GaussianPolicy p = make_policy(2, 1, {4}, rng);
  TargetPair t{c, p};
  c.net.flat().array() += 1.0;
  p.net.flat().array() += 1.0;
  polyak_update(c, p, t, 1.0);
  EXPECT_EQ(t.critic.net.flat(), c.net.flat());
  EXPECT_EQ(t.policy.net.flat(), p.net.flat());
}
