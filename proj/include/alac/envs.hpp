#pragma once

// Deterministic discrete-time control tasks with non-negative costs.
//
// Environments are immutable parameter holders; the episode state travels in
// EnvState, so one instance can serve any number of concurrent rollouts.
// Policies emit actions in (-1, 1); each environment clamps to [-1, 1] and
// scales to its physical bounds.

#include "alac/numkit.hpp"

#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace alac {

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  int horizon = 0;
  Vector action_lo;
  Vector action_hi;
};

struct EnvState {
  Vector s;
  int t = 0;
};

enum class Waveform { Sine, Square };

/// Periodic external force added before integration.
struct Disturbance {
  double magnitude = 0.0;
  int period = 50;
  Waveform waveform = Waveform::Sine;

  double value(int t) const;
  bool active() const { return magnitude != 0.0; }
};

struct StepResult {
  EnvState next;
  double cost = 0.0;
};

/// Axis-aligned reset box.
struct InitBox {
  Vector lo;
  Vector hi;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual EnvState reset(RngStream& rng) const = 0;
  virtual StepResult step(const EnvState& state, const Vector& action,
                          const Disturbance* disturbance = nullptr) const = 0;
  /// Equilibrium used by the critic's G_s transform.
  virtual Vector equilibrium() const = 0;
  /// Coordinates that enter delta_s (1) and those that do not (0).
  virtual Vector error_mask() const { return Vector::Ones(spec().state_dim); }
};

/// Samples uniformly inside `box`.
Vector sample_box(const InitBox& box, RngStream& rng);

// ---------------------------------------------------------------------------
// Cart-pole, pole upright at theta = 0. State (x, x_dot, theta, theta_dot).

struct CartpoleParams {
  double cart_mass = 1.0;        // kg
  double pole_mass = 0.1;        // kg
  double half_length = 0.5;      // m
  double gravity = 9.8;          // m/s^2
  double dt = 0.02;              // s
  double force_limit = 20.0;     // N
  double x_threshold = 10.0;     // m
  double theta_threshold = 20.0 * std::numbers::pi / 180.0;  // rad
  int horizon = 250;
  InitBox init{Vector{{-1.0, -0.05, -0.1, -0.05}}, Vector{{1.0, 0.05, 0.1, 0.05}}};
};

double cartpole_cost(const Vector& s, const CartpoleParams& p);
/// Continuous-time state derivative for applied force `force` (N).
Vector cartpole_derivative(const Vector& s, double force, const CartpoleParams& p);
/// Semi-implicit Euler step. theta is wrapped into [-pi, pi).
StepResult cartpole_step(const EnvState& state, const Vector& action, const CartpoleParams& p,
                         const Disturbance* disturbance = nullptr);

// ---------------------------------------------------------------------------
// Planar point tracking a circle centred at the origin.
// State (px, py, vx, vy, rx, ry, ex, ey) with e = p - r.

struct PointTrackParams {
  double radius = 1.0;          // m
  double angular_rate = 0.1;    // rad per step
  double velocity_limit = 2.0;  // m/s
  double dt = 0.1;              // s
  double init_offset = 0.2;     // m, half-width of the reset box around r(0)
  int horizon = 65;
};

Vector pointtrack_reference(int t, const PointTrackParams& p);
StepResult pointtrack_step(const EnvState& state, const Vector& action, const PointTrackParams& p,
                           const Disturbance* disturbance = nullptr);

// ---------------------------------------------------------------------------
// 1-D double integrator, state (position, velocity), cost |position|.

struct LinTrackParams {
  double dt = 0.1;      // s
  double accel_limit = 1.0;
  int horizon = 100;
  InitBox init{Vector{{-1.0, -0.1}}, Vector{{1.0, 0.1}}};
};

StepResult lintrack_step(const EnvState& state, const Vector& action, const LinTrackParams& p,
                         const Disturbance* disturbance = nullptr);

// ---------------------------------------------------------------------------

class CartpoleEnv final : public Env {
 public:
  explicit CartpoleEnv(CartpoleParams p = {});
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(RngStream& rng) const override;
  StepResult step(const EnvState& s, const Vector& a, const Disturbance* d) const override {
    return cartpole_step(s, a, params_, d);
  }
  Vector equilibrium() const override { return Vector::Zero(4); }
  const CartpoleParams& params() const { return params_; }

 private:
  CartpoleParams params_;
  EnvSpec spec_;
};

class PointTrackEnv final : public Env {
 public:
  explicit PointTrackEnv(PointTrackParams p = {});
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(RngStream& rng) const override;
  StepResult step(const EnvState& s, const Vector& a, const Disturbance* d) const override {
    return pointtrack_step(s, a, params_, d);
  }
  /// Zero tracking error; the other coordinates are masked out of delta_s.
  Vector equilibrium() const override { return Vector::Zero(8); }
  Vector error_mask() const override;
  const PointTrackParams& params() const { return params_; }

 private:
  PointTrackParams params_;
  EnvSpec spec_;
};

class LinTrackEnv final : public Env {
 public:
  explicit LinTrackEnv(LinTrackParams p = {});
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(RngStream& rng) const override;
  StepResult step(const EnvState& s, const Vector& a, const Disturbance* d) const override {
    return lintrack_step(s, a, params_, d);
  }
  Vector equilibrium() const override { return Vector::Zero(2); }
  const LinTrackParams& params() const { return params_; }

 private:
  LinTrackParams params_;
  EnvSpec spec_;
};

EnvState env_reset(const Env& env, RngStream& rng);
Vector equilibrium(const Env& env);

/// "cartpole-cost", "point-circle-cost" or "lintrack". `overrides` maps
/// parameter names (e.g. "pole_mass", "horizon") to values; unknown names
/// throw ContractError.
std::unique_ptr<Env> make_env(const std::string& name,
                              const std::map<std::string, double>& overrides = {});

/// Names accepted by make_env's `overrides` for the given environment.
std::vector<std::string> env_parameter_names(const std::string& name);

}  // namespace alac
