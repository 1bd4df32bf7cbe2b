#include "alac/envs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace alac {

double Disturbance::value(int t) const {
  if (!active()) return 0.0;
  require(period >= 1, "Disturbance: period must be positive");
  const double wave = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period);
  switch (waveform) {
    case Waveform::Sine: return magnitude * wave;
    case Waveform::Square: return magnitude * (wave >= 0.0 ? 1.0 : -1.0);
  }
  return 0.0;
}

Vector sample_box(const InitBox& box, RngStream& rng) {
  require(box.lo.size() == box.hi.size(), "sample_box: bound dimension mismatch");
  Vector out(box.lo.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double u = rng.uniform();
    out[i] = box.lo[i] == box.hi[i] ? box.lo[i] : box.lo[i] + (box.hi[i] - box.lo[i]) * u;
  }
  return out;
}

namespace {

double clamp_unit(double a) { return std::clamp(a, -1.0, 1.0); }

void check_action(const Vector& action, int dim, const char* who) {
  require(action.size() == dim, std::string(who) + ": action dimension mismatch");
}

}  // namespace

// ---------------------------------------------------------------------------

double cartpole_cost(const Vector& s, const CartpoleParams& p) {
  const double xr = s[0] / p.x_threshold;
  const double tr = s[2] / p.theta_threshold;
  return xr * xr + 20.0 * tr * tr;
}

Vector cartpole_derivative(const Vector& s, double force, const CartpoleParams& p) {
  const double theta_dot = s[3];
  const double total_mass = p.cart_mass + p.pole_mass;
  const double polemass_length = p.pole_mass * p.half_length;
  const double cos_t = std::cos(s[2]);
  const double sin_t = std::sin(s[2]);
  const double temp = (force + polemass_length * theta_dot * theta_dot * sin_t) / total_mass;
  const double theta_acc = (p.gravity * sin_t - cos_t * temp) /
                           (p.half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass));
  const double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass;
  return Vector{{s[1], x_acc, theta_dot, theta_acc}};
}

StepResult cartpole_step(const EnvState& state, const Vector& action, const CartpoleParams& p,
                         const Disturbance* disturbance) {
  check_action(action, 1, "cartpole_step");
  require(state.s.size() == 4, "cartpole_step: state dimension mismatch");
  double force = clamp_unit(action[0]) * p.force_limit;
  if (disturbance != nullptr && disturbance->active()) force += disturbance->value(state.t);

  const Vector d = cartpole_derivative(state.s, force, p);
  StepResult r;
  r.next.t = state.t + 1;
  r.next.s.resize(4);
  // Velocities first, positions with the updated velocities.
  r.next.s[1] = state.s[1] + p.dt * d[1];
  r.next.s[3] = state.s[3] + p.dt * d[3];
  r.next.s[0] = state.s[0] + p.dt * r.next.s[1];
  r.next.s[2] = std::remainder(state.s[2] + p.dt * r.next.s[3], 2.0 * std::numbers::pi);
  r.cost = cartpole_cost(r.next.s, p);
  return r;
}

// ---------------------------------------------------------------------------

Vector pointtrack_reference(int t, const PointTrackParams& p) {
  const double phase = p.angular_rate * static_cast<double>(t);
  return Vector{{p.radius * std::cos(phase), p.radius * std::sin(phase)}};
}

StepResult pointtrack_step(const EnvState& state, const Vector& action, const PointTrackParams& p,
                           const Disturbance* disturbance) {
  check_action(action, 2, "pointtrack_step");
  require(state.s.size() == 8, "pointtrack_step: state dimension mismatch");
  double vx = clamp_unit(action[0]) * p.velocity_limit;
  const double vy = clamp_unit(action[1]) * p.velocity_limit;
  if (disturbance != nullptr && disturbance->active()) vx += disturbance->value(state.t);

  StepResult r;
  r.next.t = state.t + 1;
  const double px = state.s[0] + p.dt * vx;
  const double py = state.s[1] + p.dt * vy;
  const Vector ref = pointtrack_reference(r.next.t, p);
  const double ex = px - ref[0];
  const double ey = py - ref[1];
  r.next.s = Vector{{px, py, vx, vy, ref[0], ref[1], ex, ey}};
  r.cost = std::hypot(ex, ey);
  return r;
}

// ---------------------------------------------------------------------------

StepResult lintrack_step(const EnvState& state, const Vector& action, const LinTrackParams& p,
                         const Disturbance* disturbance) {
  check_action(action, 1, "lintrack_step");
  require(state.s.size() == 2, "lintrack_step: state dimension mismatch");
  double u = clamp_unit(action[0]) * p.accel_limit;
  if (disturbance != nullptr && disturbance->active()) u += disturbance->value(state.t);

  StepResult r;
  r.next.t = state.t + 1;
  const double pos = state.s[0] + p.dt * state.s[1] + 0.5 * p.dt * p.dt * u;
  const double vel = state.s[1] + p.dt * u;
  r.next.s = Vector{{pos, vel}};
  r.cost = std::abs(pos);
  return r;
}

// ---------------------------------------------------------------------------

CartpoleEnv::CartpoleEnv(CartpoleParams p) : params_(std::move(p)) {
  require(params_.horizon >= 1, "cartpole: horizon must be positive");
  spec_ = {"cartpole-cost", 4, 1, params_.horizon, Vector::Constant(1, -params_.force_limit),
           Vector::Constant(1, params_.force_limit)};
}

EnvState CartpoleEnv::reset(RngStream& rng) const { return {sample_box(params_.init, rng), 0}; }

PointTrackEnv::PointTrackEnv(PointTrackParams p) : params_(std::move(p)) {
  require(params_.horizon >= 1, "point-circle: horizon must be positive");
  spec_ = {"point-circle-cost", 8, 2, params_.horizon, Vector::Constant(2, -params_.velocity_limit),
           Vector::Constant(2, params_.velocity_limit)};
}

EnvState PointTrackEnv::reset(RngStream& rng) const {
  const Vector ref = pointtrack_reference(0, params_);
  const InitBox box{ref.array() - params_.init_offset, ref.array() + params_.init_offset};
  const Vector pos = sample_box(box, rng);
  return {Vector{{pos[0], pos[1], 0.0, 0.0, ref[0], ref[1], pos[0] - ref[0], pos[1] - ref[1]}}, 0};
}

Vector PointTrackEnv::error_mask() const {
  return Vector{{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0}};
}

LinTrackEnv::LinTrackEnv(LinTrackParams p) : params_(std::move(p)) {
  require(params_.horizon >= 1, "lintrack: horizon must be positive");
  spec_ = {"lintrack", 2, 1, params_.horizon, Vector::Constant(1, -params_.accel_limit),
           Vector::Constant(1, params_.accel_limit)};
}

EnvState LinTrackEnv::reset(RngStream& rng) const { return {sample_box(params_.init, rng), 0}; }

EnvState env_reset(const Env& env, RngStream& rng) { return env.reset(rng); }

Vector equilibrium(const Env& env) { return env.equilibrium(); }

// ---------------------------------------------------------------------------

namespace {

using Setter = std::function<void(double)>;

int to_horizon(double v) {
  require(v >= 1.0 && v == std::floor(v), "horizon must be a positive integer");
  return static_cast<int>(v);
}

// Init-box coordinates are exposed as init_lo_<i> / init_hi_<i>.
void add_box_setters(std::map<std::string, Setter>& m, InitBox& box) {
  for (Eigen::Index i = 0; i < box.lo.size(); ++i) {
    m["init_lo_" + std::to_string(i)] = [&box, i](double v) { box.lo[i] = v; };
    m["init_hi_" + std::to_string(i)] = [&box, i](double v) { box.hi[i] = v; };
  }
}

std::map<std::string, Setter> setters(CartpoleParams& p) {
  std::map<std::string, Setter> m{
      {"cart_mass", [&](double v) { p.cart_mass = v; }},
      {"pole_mass", [&](double v) { p.pole_mass = v; }},
      {"half_length", [&](double v) { p.half_length = v; }},
      {"gravity", [&](double v) { p.gravity = v; }},
      {"dt", [&](double v) { p.dt = v; }},
      {"force_limit", [&](double v) { p.force_limit = v; }},
      {"horizon", [&](double v) { p.horizon = to_horizon(v); }},
  };
  add_box_setters(m, p.init);
  return m;
}

std::map<std::string, Setter> setters(PointTrackParams& p) {
  return {
      {"radius", [&](double v) { p.radius = v; }},
      {"angular_rate", [&](double v) { p.angular_rate = v; }},
      {"velocity_limit", [&](double v) { p.velocity_limit = v; }},
      {"dt", [&](double v) { p.dt = v; }},
      {"init_offset", [&](double v) { p.init_offset = v; }},
      {"horizon", [&](double v) { p.horizon = to_horizon(v); }},
  };
}

std::map<std::string, Setter> setters(LinTrackParams& p) {
  std::map<std::string, Setter> m{
      {"dt", [&](double v) { p.dt = v; }},
      {"accel_limit", [&](double v) { p.accel_limit = v; }},
      {"horizon", [&](double v) { p.horizon = to_horizon(v); }},
  };
  add_box_setters(m, p.init);
  return m;
}

template <typename Params>
void apply(Params& p, const std::map<std::string, double>& overrides, const std::string& env) {
  auto table = setters(p);
  for (const auto& [key, value] : overrides) {
    auto it = table.find(key);
    if (it == table.end()) throw ContractError("unknown parameter '" + key + "' for env " + env);
    require(std::isfinite(value), "parameter '" + key + "' must be finite");
    it->second(value);
  }
}

template <typename Params>
std::vector<std::string> names_of() {
  Params p;
  std::vector<std::string> out;
  for (const auto& [k, _] : setters(p)) out.push_back(k);
  return out;
}

}  // namespace

std::unique_ptr<Env> make_env(const std::string& name, const std::map<std::string, double>& overrides) {
  if (name == "cartpole-cost") {
    CartpoleParams p;
    apply(p, overrides, name);
    return std::make_unique<CartpoleEnv>(p);
  }
  if (name == "point-circle-cost") {
    PointTrackParams p;
    apply(p, overrides, name);
    return std::make_unique<PointTrackEnv>(p);
  }
  if (name == "lintrack") {
    LinTrackParams p;
    apply(p, overrides, name);
    return std::make_unique<LinTrackEnv>(p);
  }
  throw ContractError("unknown environment '" + name + "'");
}

std::vector<std::string> env_parameter_names(const std::string& name) {
  if (name == "cartpole-cost") return names_of<CartpoleParams>();
  if (name == "point-circle-cost") return names_of<PointTrackParams>();
  if (name == "lintrack") return names_of<LinTrackParams>();
  throw ContractError("unknown environment '" + name + "'");
}

}  // namespace alac
