#pragma once

// Function approximators: a plain MLP with an explicit backward pass, the
// tanh-squashed Gaussian policy, and the constrained Lyapunov critic.
//
// All evaluation is batched: inputs are (dim x batch) matrices.

#include "alac/numkit.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace alac {

enum class Activation { Relu, Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpSpec {
  std::vector<int> layer_sizes;
  /// One per affine layer, i.e. layer_sizes.size() - 1 entries.
  std::vector<Activation> activations;

  void validate() const;
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  Eigen::Index parameter_count() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Weights and biases of every layer, stored contiguously so optimizers,
/// averaging and checkpoints can treat them as one flat vector. Layer `l`
/// owns W_l (column-major, out x in) followed by b_l.
///
/// Every mutable accessor bumps `revision()`, which lets caches detect that
/// the parameters changed after a forward pass.
class MlpParams {
 public:
  MlpParams() = default;
  explicit MlpParams(MlpSpec spec);

  static MlpParams zeros_like(const MlpParams& other) { return MlpParams(other.spec_); }

  const MlpSpec& spec() const { return spec_; }

  Eigen::Map<const Matrix> weight(int layer) const;
  Eigen::Map<const Vector> bias(int layer) const;
  Eigen::Map<Matrix> weight(int layer);
  Eigen::Map<Vector> bias(int layer);

  const Vector& flat() const { return flat_; }
  Vector& flat() {
    ++revision_;
    return flat_;
  }

  std::uint64_t revision() const { return revision_; }
  bool same_shape(const MlpParams& other) const { return spec_ == other.spec_; }

 private:
  MlpSpec spec_;
  Vector flat_;
  std::vector<Eigen::Index> offsets_;
  std::uint64_t revision_ = 0;
};

/// Orthogonal initialization: `hidden_gain` for all but the last layer,
/// `output_gain` for the last; biases zero.
MlpParams make_mlp(const MlpSpec& spec, RngStream& rng, double hidden_gain = 1.0,
                   double output_gain = 1.0);

struct MlpCache {
  const MlpParams* params = nullptr;
  std::uint64_t revision = 0;
  /// inputs[l] is the input to layer l (inputs[0] is the network input).
  std::vector<Matrix> inputs;
  /// Post-activation outputs of each layer; the last one is the net output.
  std::vector<Matrix> outputs;
};

struct MlpForward {
  Matrix output;
  MlpCache cache;
};

struct MlpGradients {
  MlpParams params;
  Matrix input;
};

MlpForward mlp_forward(const MlpParams& params, const Matrix& input);
/// Forward pass without retaining a cache.
Matrix mlp_eval(const MlpParams& params, const Matrix& input);

/// Gradients of sum(output .* output_grad) with respect to every parameter
/// (summed over the batch) and to the input.
MlpGradients mlp_backward(const MlpParams& params, const MlpCache& cache, const Matrix& output_grad,
                          bool want_param_grads = true);

// ---------------------------------------------------------------------------
// Squashed Gaussian policy.

struct GaussianPolicy {
  /// Trunk plus both heads: the last layer emits [mean; raw log-std].
  MlpParams net;
  int action_dim = 0;
  double log_std_min = -20.0;
  double log_std_max = 2.0;

  int state_dim() const { return net.spec().input_dim(); }
};

/// Builds a policy with ReLU hidden layers of the given widths.
GaussianPolicy make_policy(int state_dim, int action_dim, const std::vector<int>& hidden,
                           RngStream& rng);

struct PolicyCache {
  MlpCache net;
  const GaussianPolicy* policy = nullptr;
  Matrix log_std;   // clamped
  Matrix std;
  Matrix noise;
  Matrix pre_tanh;
  Matrix action;
  /// 1 where the raw log-std was inside the clamp range, else 0.
  Matrix log_std_active;
};

struct PolicySample {
  Matrix action;    // (action_dim x batch), entries in (-1, 1)
  Vector log_prob;  // (batch)
  Matrix mean;      // pre-squash mean
  PolicyCache cache;
};

/// Reparameterized sample tanh(mean + std * noise) with the given noise.
PolicySample policy_sample(const GaussianPolicy& policy, const Matrix& states, const Matrix& noise);
/// Same, drawing the noise from `rng` (column by column).
PolicySample policy_sample(const GaussianPolicy& policy, const Matrix& states, RngStream& rng);
/// Deterministic mode: tanh(mean). Equivalent to a zero-noise sample.
PolicySample policy_deterministic(const GaussianPolicy& policy, const Matrix& states);
/// Deterministic action only, no cache.
Matrix policy_act(const GaussianPolicy& policy, const Matrix& states);

struct PolicyGradients {
  MlpParams params;
  Matrix state;
};

/// Gradients of sum(action .* action_grad) + sum(log_prob .* log_prob_grad)
/// with respect to the policy parameters and the states, noise held fixed.
/// Log-std entries pinned at a clamp bound receive no gradient.
PolicyGradients policy_backward(const GaussianPolicy& policy, const PolicyCache& cache,
                                const Matrix& action_grad, const Vector& log_prob_grad);

// ---------------------------------------------------------------------------
// Constrained Lyapunov critic.

/// Scales `f_out` by sum|delta_s| / (sum|delta_s| + eps).
Vector gs_transform(const Vector& f_out, const Vector& delta_s, double eps);
double gs_scale(const Vector& delta_s, double eps);

struct LyapunovCritic {
  /// Network over the concatenation [s; a]; output width is v.
  MlpParams net;
  Vector equilibrium;
  /// 1 for state coordinates that enter delta_s, 0 for ignored ones.
  Vector error_mask;
  double eps = 1e-6;
  int state_dim = 0;
  int action_dim = 0;

  int width() const { return net.spec().output_dim(); }
};

/// `layers` lists the hidden widths followed by the output width v, e.g.
/// {64, 64, 16}.
LyapunovCritic make_critic(int state_dim, int action_dim, const std::vector<int>& layers,
                           Vector equilibrium, RngStream& rng,
                           Activation hidden = Activation::Relu, Vector error_mask = {});

struct CriticCache {
  MlpCache net;
  const LyapunovCritic* critic = nullptr;
  Vector scale;  // per sample
  Matrix f;      // raw network output
};

struct CriticEval {
  Vector value;
  CriticCache cache;
};

CriticEval critic_value(const LyapunovCritic& critic, const Matrix& states, const Matrix& actions);
Vector critic_eval(const LyapunovCritic& critic, const Matrix& states, const Matrix& actions);

struct CriticGradients {
  MlpParams params;
  Matrix action;
};

/// Gradients of sum(value .* upstream) w.r.t. the critic parameters and the
/// actions.
CriticGradients critic_backward(const LyapunovCritic& critic, const CriticCache& cache,
                                const Vector& upstream, bool want_param_grads = true);

// ---------------------------------------------------------------------------
// Target networks.

/// Target copies of the online networks; shapes always match them.
struct TargetPair {
  LyapunovCritic critic;
  GaussianPolicy policy;
};

/// target <- sigma * online + (1 - sigma) * target.
void polyak_update(const MlpParams& online, MlpParams& target, double sigma);
void polyak_update(const LyapunovCritic& critic, const GaussianPolicy& policy, TargetPair& targets,
                   double sigma);

}  // namespace alac
