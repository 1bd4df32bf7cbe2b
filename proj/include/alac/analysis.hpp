#pragma once

// Exact tabular checks of the stability certificate's supporting results:
// the cost-to-go Lyapunov candidate and its bounds, the finite-horizon
// (Cesaro average) gap, the finite-trajectory concentration bound, the
// finite tracking time of the continuous relaxation, and a disturbance sweep
// over trained controllers.

#include "alac/alac.hpp"

#include <iosfwd>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace alac {

/// Thrown when a chain is not irreducible and aperiodic.
class ErgodicityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  /// transitions[a](s, s') = P(s' | s, a); each row sums to one.
  std::vector<Matrix> transitions;
  /// c_pi(s): expected one-step cost in state s under the fixed policy.
  Vector cost;
  /// policy(s, a) = pi(a | s).
  Matrix policy;
  Vector rho;
  double gamma = 0.9;

  void validate() const;
  /// P_pi(s, s') = sum_a pi(a|s) P(s'|s, a).
  Matrix policy_transition() const;
  double max_cost() const { return cost.maxCoeff(); }
};

/// Random instance: Dirichlet(1) rows for P, pi and rho, costs U[0, 1);
/// transitions blended with `mix_eps` uniform mass to force ergodicity.
TabularMdp random_mdp(int n_states, int n_actions, double gamma, RngStream& rng,
                      double mix_eps = 1e-3);
/// P <- (1 - eps) P + eps / n.
TabularMdp blend_uniform(TabularMdp mdp, double eps);

/// Structured-text form:
///
///   # comment
///   states 3
///   actions 2
///   gamma 0.9
///   rho 0.5 0.25 0.25
///   cost 1 0 0.5
///   policy 0 : 0.5 0.5          (one line per state)
///   P 0 1 : 0.2 0.3 0.5         (one line per state/action pair)
TabularMdp parse_mdp(std::istream& in);
TabularMdp load_mdp(const std::string& path);
void write_mdp(std::ostream& out, const TabularMdp& mdp);

/// Solves (I - gamma P_pi) L = c_pi.
Vector exact_lyapunov(const TabularMdp& mdp);

/// Expectation-form residual Delta L_pi(s) for a tabular candidate.
Vector tabular_delta_l(const TabularMdp& mdp, const Vector& lyapunov, double k, double lambda);

struct BoundReport {
  std::string check;
  std::string label;
  double measured = 0.0;
  double bound = 0.0;
  bool satisfied = false;
  double q = std::numeric_limits<double>::quiet_NaN();
  long samples_m = 0;
  long horizon_t = 0;
  /// Deviation level of a concentration check.
  double deviation_level = std::numeric_limits<double>::quiet_NaN();
  double margin = 0.0;
  std::map<std::string, double> diagnostics;

  /// Sets satisfied and margin from measured/bound.
  void finalize();
};

std::string to_json_line(const BoundReport& r);

/// Two reports: "candidate-bound" (max L vs c_max / (1 - gamma), with the
/// min/max L/c ratios as diagnostics) and "bellman-identity" (max residual
/// vs 1e-10).
std::vector<BoundReport> candidate_bound_check(const TabularMdp& mdp, const Vector& lyapunov);

struct Distributions {
  Vector stationary;
  /// (1/T) sum_{t=1..T} marginal_t.
  Vector finite_average;
  /// marginals[t] = rho P_pi^t for t = 0..T.
  std::vector<Vector> marginals;
};

bool is_ergodic(const Matrix& transition);
/// Throws ErgodicityError unless P_pi is irreducible and aperiodic.
Distributions distributions(const TabularMdp& mdp, int horizon);
Vector stationary_distribution(const Matrix& transition);

/// One report per T in `horizons`. q is the smallest exponent with
/// sum_{t=1..T} |omega - marginal_t|_1 <= 2 T^q over the grid (plus 1e-9).
std::vector<BoundReport> check_theorem3(const TabularMdp& mdp, double k, double lambda,
                                        const std::vector<int>& horizons);

/// One report per (M, alpha). Each repetition draws M trajectories of T
/// steps from rho and averages the trajectory-form residual
/// (1 - k lambda) L(s_{t+1}) - (1 - k) L(s_t) over t = 1..T.
std::vector<BoundReport> check_theorem4(const TabularMdp& mdp, double k, double lambda,
                                        const std::vector<int>& trajectory_counts, int horizon,
                                        const std::vector<double>& alphas, int reps, RngStream& rng);

/// Closed-form right-hand side of the concentration bound.
double theorem4_bound(int m, double alpha, double k, double lambda, double gamma, double max_cost);

// ---------------------------------------------------------------------------
// Finite tracking time.

/// Reference profiles. Both start R above W so that W climbs toward R.
///  ConstantSlope: R(t) = R0 - mu (t - t0). The error W - R < 0 and
///    dR/dt = -mu, which is the worst case the closed-form time assumes.
///  Sinusoid: R(t) = R0 + (mu / omega) sin(omega (t - t0)); slope bounded by
///    mu but not always adversarial, so the closed-form time need not hold.
enum class ReferenceProfile { ConstantSlope, Sinusoid };

struct TrackingSim {
  double k = 1.0;
  double mu = 1.0;
  double v0 = 1.0;  // V(t0) = (W - R)^2 / 2
  double t0 = 0.0;
  /// 0 picks min(0.001, 0.01 / k).
  double dt = 0.0;
  ReferenceProfile profile = ReferenceProfile::ConstantSlope;
  double omega = 1.0;
  double reference_start = 0.0;
};

/// t0 + (1/k) ln((sqrt(2)/2 mu/k + sqrt(v0)) / (sqrt(2)/2 mu/k)); +inf when
/// mu = 0 and v0 > 0.
double predicted_tracking_time(double k, double mu, double v0, double t0);

struct TrackingResult {
  std::vector<double> times;
  std::vector<double> values;  // V(t)
  double predicted_time = 0.0;
  double measured_time = std::numeric_limits<double>::quiet_NaN();
  double value_at_predicted = std::numeric_limits<double>::quiet_NaN();
  double tolerance = 0.0;
  bool converged = false;
  bool satisfied = false;
};

/// Integrates dW/dt = -k (W - R(t)) with RK4.
TrackingResult simulate_tracking(const TrackingSim& sim);
BoundReport tracking_report(const TrackingSim& sim, const TrackingResult& r);

// ---------------------------------------------------------------------------
// Robustness.

struct RobustnessRow {
  double magnitude = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

/// One deterministic evaluation per magnitude; every row starts from a copy
/// of `rng`, so all rows see the same initial states.
std::vector<RobustnessRow> robustness_sweep(const Env& env, const GaussianPolicy& policy,
                                            const LyapunovCritic* critic,
                                            const std::vector<double>& magnitudes, int trials,
                                            const RngStream& rng, int period = 50,
                                            Waveform waveform = Waveform::Sine);
std::vector<RobustnessRow> robustness_sweep(const Env& env, const Controller& controller,
                                            const std::vector<double>& magnitudes, int trials,
                                            const RngStream& rng, int period = 50,
                                            Waveform waveform = Waveform::Sine);

}  // namespace alac
