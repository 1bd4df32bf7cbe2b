#include "alac/nets.hpp"

#include <cmath>
#include <numbers>

namespace alac {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw ContractError("unknown activation '" + name + "'");
}

void MlpSpec::validate() const {
  require(layer_sizes.size() >= 2, "MlpSpec: need at least two layer sizes");
  require(activations.size() == layer_sizes.size() - 1,
          "MlpSpec: activations must have one entry per affine layer");
  for (int s : layer_sizes) require(s >= 1, "MlpSpec: layer sizes must be positive");
}

Eigen::Index MlpSpec::parameter_count() const {
  Eigen::Index n = 0;
  for (int l = 0; l < num_layers(); ++l)
    n += static_cast<Eigen::Index>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
  return n;
}

MlpParams::MlpParams(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Eigen::Index off = 0;
  for (int l = 0; l < spec_.num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<Eigen::Index>(spec_.layer_sizes[l + 1]) * (spec_.layer_sizes[l] + 1);
  }
  flat_ = Vector::Zero(off);
}

Eigen::Map<const Matrix> MlpParams::weight(int layer) const {
  const int out = spec_.layer_sizes[layer + 1];
  const int in = spec_.layer_sizes[layer];
  return {flat_.data() + offsets_[layer], out, in};
}

Eigen::Map<const Vector> MlpParams::bias(int layer) const {
  const int out = spec_.layer_sizes[layer + 1];
  const int in = spec_.layer_sizes[layer];
  return {flat_.data() + offsets_[layer] + static_cast<Eigen::Index>(out) * in, out};
}

Eigen::Map<Matrix> MlpParams::weight(int layer) {
  ++revision_;
  const int out = spec_.layer_sizes[layer + 1];
  const int in = spec_.layer_sizes[layer];
  return {flat_.data() + offsets_[layer], out, in};
}

Eigen::Map<Vector> MlpParams::bias(int layer) {
  ++revision_;
  const int out = spec_.layer_sizes[layer + 1];
  const int in = spec_.layer_sizes[layer];
  return {flat_.data() + offsets_[layer] + static_cast<Eigen::Index>(out) * in, out};
}

MlpParams make_mlp(const MlpSpec& spec, RngStream& rng, double hidden_gain, double output_gain) {
  MlpParams p(spec);
  const int n = spec.num_layers();
  for (int l = 0; l < n; ++l) {
    const double gain = (l == n - 1) ? output_gain : hidden_gain;
    p.weight(l) = orthogonal_init(spec.layer_sizes[l + 1], spec.layer_sizes[l], gain, rng);
  }
  return p;
}

namespace {

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::Relu: z = z.cwiseMax(0.0); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Identity: break;
  }
}

// Multiplies `g` in place by the activation derivative, expressed through the
// activation output.
void apply_activation_grad(Activation act, const Matrix& out, Matrix& g) {
  switch (act) {
    case Activation::Relu: g = (out.array() > 0.0).select(g, 0.0); break;
    case Activation::Tanh: g.array() *= 1.0 - out.array().square(); break;
    case Activation::Identity: break;
  }
}

Matrix layer_forward(const MlpParams& params, int l, const Matrix& x) {
  Matrix z(params.spec().layer_sizes[l + 1], x.cols());
  z.noalias() = params.weight(l) * x;
  z.colwise() += params.bias(l);
  apply_activation(params.spec().activations[l], z);
  return z;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

}  // namespace

MlpForward mlp_forward(const MlpParams& params, const Matrix& input) {
  require(input.rows() == params.spec().input_dim(), "mlp_forward: input dimension mismatch");
  MlpForward fwd;
  fwd.cache.params = &params;
  fwd.cache.revision = params.revision();
  const int n = params.spec().num_layers();
  fwd.cache.inputs.reserve(n);
  fwd.cache.outputs.reserve(n);
  fwd.cache.inputs.push_back(input);
  for (int l = 0; l < n; ++l) {
    fwd.cache.outputs.push_back(layer_forward(params, l, fwd.cache.inputs.back()));
    if (l + 1 < n) fwd.cache.inputs.push_back(fwd.cache.outputs.back());
  }
  fwd.output = fwd.cache.outputs.back();
  return fwd;
}

Matrix mlp_eval(const MlpParams& params, const Matrix& input) {
  require(input.rows() == params.spec().input_dim(), "mlp_eval: input dimension mismatch");
  Matrix x = input;
  for (int l = 0; l < params.spec().num_layers(); ++l) x = layer_forward(params, l, x);
  return x;
}

MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& output_grad,
                          bool want_param_grads) {
  require(cache.params == &params && cache.revision == params.revision(),
          "mlp_backward: cache does not belong to these parameters (stale or mismatched)");
  const int n = params.spec().num_layers();
  require(static_cast<int>(cache.outputs.size()) == n, "mlp_backward: malformed cache");
  require(output_grad.rows() == params.spec().output_dim() &&
              output_grad.cols() == cache.outputs.back().cols(),
          "mlp_backward: output_grad shape mismatch");

  MlpGradients grads;
  if (want_param_grads) grads.params = MlpParams::zeros_like(params);
  Matrix g = output_grad;
  for (int l = n - 1; l >= 0; --l) {
    apply_activation_grad(params.spec().activations[l], cache.outputs[l], g);
    if (want_param_grads) {
      grads.params.weight(l).noalias() = g * cache.inputs[l].transpose();
      grads.params.bias(l) = g.rowwise().sum();
    }
    Matrix next(params.spec().layer_sizes[l], g.cols());
    next.noalias() = params.weight(l).transpose() * g;
    g = std::move(next);
  }
  grads.input = std::move(g);
  return grads;
}

// ---------------------------------------------------------------------------

GaussianPolicy make_policy(int state_dim, int action_dim, const std::vector<int>& hidden,
                           RngStream& rng) {
  require(state_dim >= 1 && action_dim >= 1, "make_policy: dimensions must be positive");
  MlpSpec spec;
  spec.layer_sizes.push_back(state_dim);
  for (int h : hidden) {
    spec.layer_sizes.push_back(h);
    spec.activations.push_back(Activation::Relu);
  }
  spec.layer_sizes.push_back(2 * action_dim);
  spec.activations.push_back(Activation::Identity);
  GaussianPolicy policy;
  policy.net = make_mlp(spec, rng, 1.0, 0.01);
  policy.action_dim = action_dim;
  return policy;
}

PolicySample policy_sample(const GaussianPolicy& policy, const Matrix& states, const Matrix& noise) {
  const int d = policy.action_dim;
  require(noise.rows() == d && noise.cols() == states.cols(), "policy_sample: noise shape mismatch");
  MlpForward fwd = mlp_forward(policy.net, states);

  PolicySample out;
  out.mean = fwd.output.topRows(d);
  const Matrix raw = fwd.output.bottomRows(d);
  PolicyCache& c = out.cache;
  c.policy = &policy;
  c.log_std = raw.cwiseMax(policy.log_std_min).cwiseMin(policy.log_std_max);
  c.log_std_active =
      ((raw.array() > policy.log_std_min) && (raw.array() < policy.log_std_max)).cast<double>().matrix();
  c.std = c.log_std.array().exp().matrix();
  c.noise = noise;
  c.pre_tanh = out.mean + c.std.cwiseProduct(noise);
  c.action = c.pre_tanh.array().tanh().matrix();

  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Eigen::Index batch = states.cols();
  out.log_prob.resize(batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    double lp = 0.0;
    for (int i = 0; i < d; ++i) {
      const double xi = noise(i, j);
      lp += -0.5 * xi * xi - c.log_std(i, j) - half_log_2pi;
      lp -= log_one_minus_tanh_sq(c.pre_tanh(i, j));
    }
    out.log_prob[j] = lp;
  }
  out.action = c.action;
  c.net = std::move(fwd.cache);
  return out;
}

PolicySample policy_sample(const GaussianPolicy& policy, const Matrix& states, RngStream& rng) {
  return policy_sample(policy, states, gaussian_matrix(rng, policy.action_dim, static_cast<int>(states.cols())));
}

PolicySample policy_deterministic(const GaussianPolicy& policy, const Matrix& states) {
  return policy_sample(policy, states, Matrix::Zero(policy.action_dim, states.cols()));
}

Matrix policy_act(const GaussianPolicy& policy, const Matrix& states) {
  const Matrix out = mlp_eval(policy.net, states);
  return out.topRows(policy.action_dim).array().tanh().matrix();
}

PolicyGradients policy_backward(const GaussianPolicy& policy, const PolicyCache& cache,
                                const Matrix& action_grad, const Vector& log_prob_grad) {
  require(cache.policy == &policy, "policy_backward: cache belongs to a different policy");
  const int d = policy.action_dim;
  const Eigen::Index batch = cache.action.cols();
  require(action_grad.rows() == d && action_grad.cols() == batch,
          "policy_backward: action_grad shape mismatch");
  require(log_prob_grad.size() == batch, "policy_backward: log_prob_grad size mismatch");

  // a = tanh(u), u = mean + std * xi.
  //   d a / d mean = 1 - a^2,      d a / d log_std = (1 - a^2) std xi
  //   d logp / d mean = 2 a,       d logp / d log_std = -1 + 2 a std xi
  const Eigen::ArrayXXd a = cache.action.array();
  const Eigen::ArrayXXd da_du = 1.0 - a.square();
  const Eigen::ArrayXXd sxi = cache.std.array() * cache.noise.array();
  const Eigen::ArrayXXd glp = log_prob_grad.transpose().replicate(d, 1).array();
  const Eigen::ArrayXXd ga = action_grad.array();

  Matrix out_grad(2 * d, batch);
  out_grad.topRows(d) = (ga * da_du + glp * 2.0 * a).matrix();
  out_grad.bottomRows(d) =
      ((ga * da_du * sxi + glp * (-1.0 + 2.0 * a * sxi)) * cache.log_std_active.array()).matrix();

  MlpGradients g = mlp_backward(policy.net, cache.net, out_grad);
  return {std::move(g.params), std::move(g.input)};
}

// ---------------------------------------------------------------------------

double gs_scale(const Vector& delta_s, double eps) {
  require(eps > 0.0, "gs_transform: eps must be positive");
  const double total = delta_s.cwiseAbs().sum();
  return total / (total + eps);
}

Vector gs_transform(const Vector& f_out, const Vector& delta_s, double eps) {
  return gs_scale(delta_s, eps) * f_out;
}

LyapunovCritic make_critic(int state_dim, int action_dim, const std::vector<int>& layers,
                           Vector equilibrium, RngStream& rng, Activation hidden, Vector error_mask) {
  require(!layers.empty(), "make_critic: need at least the output width");
  require(equilibrium.size() == state_dim, "make_critic: equilibrium dimension mismatch");
  MlpSpec spec;
  spec.layer_sizes.push_back(state_dim + action_dim);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    spec.layer_sizes.push_back(layers[i]);
    spec.activations.push_back(i + 1 == layers.size() ? Activation::Identity : hidden);
  }
  LyapunovCritic critic;
  critic.net = make_mlp(spec, rng, 1.0, 1.0);
  critic.equilibrium = std::move(equilibrium);
  critic.error_mask = error_mask.size() == 0 ? Vector::Ones(state_dim) : std::move(error_mask);
  require(critic.error_mask.size() == state_dim, "make_critic: error_mask dimension mismatch");
  critic.state_dim = state_dim;
  critic.action_dim = action_dim;
  return critic;
}

CriticEval critic_value(const LyapunovCritic& critic, const Matrix& states, const Matrix& actions) {
  require(states.rows() == critic.state_dim, "critic_value: state dimension mismatch");
  require(actions.rows() == critic.action_dim, "critic_value: action dimension mismatch");
  require(states.cols() == actions.cols(), "critic_value: batch size mismatch");
  require(critic.eps > 0.0, "critic_value: eps must be positive");
  const Eigen::Index batch = states.cols();

  Matrix input(critic.state_dim + critic.action_dim, batch);
  input.topRows(critic.state_dim) = states;
  input.bottomRows(critic.action_dim) = actions;
  MlpForward fwd = mlp_forward(critic.net, input);

  CriticEval out;
  CriticCache& c = out.cache;
  c.critic = &critic;
  const Matrix delta = (states.colwise() - critic.equilibrium).array().colwise() * critic.error_mask.array();
  const Eigen::RowVectorXd total = delta.cwiseAbs().colwise().sum();
  c.scale = (total.array() / (total.array() + critic.eps)).transpose();
  out.value = (c.scale.array().square() * fwd.output.colwise().squaredNorm().transpose().array()).matrix();
  c.f = std::move(fwd.output);
  c.net = std::move(fwd.cache);
  return out;
}

Vector critic_eval(const LyapunovCritic& critic, const Matrix& states, const Matrix& actions) {
  return critic_value(critic, states, actions).value;
}

CriticGradients critic_backward(const LyapunovCritic& critic, const CriticCache& cache,
                                const Vector& upstream, bool want_param_grads) {
  require(cache.critic == &critic, "critic_backward: cache belongs to a different critic");
  require(upstream.size() == cache.f.cols(), "critic_backward: upstream size mismatch");
  // L = scale^2 |f|^2  =>  dL/df = 2 scale^2 f
  const Eigen::RowVectorXd coeff = (2.0 * cache.scale.array().square() * upstream.array()).transpose();
  const Matrix f_grad = cache.f.array().rowwise() * coeff.array();
  MlpGradients g = mlp_backward(critic.net, cache.net, f_grad, want_param_grads);
  return {std::move(g.params), g.input.bottomRows(critic.action_dim)};
}

// ---------------------------------------------------------------------------

void polyak_update(const MlpParams& online, MlpParams& target, double sigma) {
  require(sigma >= 0.0 && sigma <= 1.0, "polyak_update: sigma must lie in [0, 1]");
  require(online.same_shape(target), "polyak_update: shape mismatch");
  if (sigma == 1.0) {
    target.flat() = online.flat();
  } else if (sigma != 0.0) {
    target.flat() = sigma * online.flat() + (1.0 - sigma) * target.flat();
  }
}

void polyak_update(const LyapunovCritic& critic, const GaussianPolicy& policy, TargetPair& targets,
                   double sigma) {
  polyak_update(critic.net, targets.critic.net, sigma);
  polyak_update(policy.net, targets.policy.net, sigma);
}

}  // namespace alac
