#include "alac/analysis.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace alac {

void TabularMdp::validate() const {
  require(n_states >= 1 && n_actions >= 1, "TabularMdp: need at least one state and action");
  require(static_cast<int>(transitions.size()) == n_actions, "TabularMdp: one transition matrix per action");
  require(gamma > 0.0 && gamma < 1.0, "TabularMdp: gamma must lie in (0, 1)");
  require(cost.size() == n_states && rho.size() == n_states, "TabularMdp: cost/rho dimension mismatch");
  require(policy.rows() == n_states && policy.cols() == n_actions, "TabularMdp: policy shape mismatch");
  require(cost.allFinite() && (cost.array() >= 0.0).all(), "TabularMdp: costs must be finite and >= 0");
  auto stochastic = [](const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    return (row.array() >= 0.0).all() && std::abs(row.sum() - 1.0) <= 1e-12;
  };
  require(stochastic(rho.transpose()), "TabularMdp: rho must be a distribution");
  for (int s = 0; s < n_states; ++s)
    require(stochastic(policy.row(s)), "TabularMdp: policy row " + std::to_string(s) + " is not a distribution");
  for (int a = 0; a < n_actions; ++a) {
    require(transitions[a].rows() == n_states && transitions[a].cols() == n_states,
            "TabularMdp: transition shape mismatch");
    for (int s = 0; s < n_states; ++s)
      require(stochastic(transitions[a].row(s)),
              "TabularMdp: P(.|" + std::to_string(s) + "," + std::to_string(a) + ") is not a distribution");
  }
}

Matrix TabularMdp::policy_transition() const {
  Matrix p = Matrix::Zero(n_states, n_states);
  for (int a = 0; a < n_actions; ++a) p += policy.col(a).asDiagonal() * transitions[a];
  return p;
}

namespace {

Vector dirichlet_one(RngStream& rng, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    v[i] = -std::log(u);
  }
  return v / v.sum();
}

// Rows renormalized so they sum to one to the last ulp the format allows.
void renormalize_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
}

}  // namespace

TabularMdp random_mdp(int n_states, int n_actions, double gamma, RngStream& rng, double mix_eps) {
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  for (int a = 0; a < n_actions; ++a) {
    Matrix p(n_states, n_states);
    for (int s = 0; s < n_states; ++s) p.row(s) = dirichlet_one(rng, n_states).transpose();
    mdp.transitions.push_back(std::move(p));
  }
  mdp.policy.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) mdp.policy.row(s) = dirichlet_one(rng, n_actions).transpose();
  mdp.cost.resize(n_states);
  for (int s = 0; s < n_states; ++s) mdp.cost[s] = rng.uniform();
  mdp.rho = dirichlet_one(rng, n_states);
  return blend_uniform(std::move(mdp), mix_eps);
}

TabularMdp blend_uniform(TabularMdp mdp, double eps) {
  require(eps >= 0.0 && eps <= 1.0, "blend_uniform: eps must lie in [0, 1]");
  if (eps == 0.0) return mdp;
  for (auto& p : mdp.transitions) {
    p = (1.0 - eps) * p + Matrix::Constant(p.rows(), p.cols(), eps / static_cast<double>(p.cols()));
    renormalize_rows(p);
  }
  return mdp;
}

// ---------------------------------------------------------------------------

namespace {

[[noreturn]] void parse_error(int line, const std::string& what) {
  throw ContractError("mdp file line " + std::to_string(line) + ": " + what);
}

std::vector<double> read_numbers(std::istringstream& is) {
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw ContractError("bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

Vector to_vector(const std::vector<double>& xs) {
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

}  // namespace

TabularMdp parse_mdp(std::istream& in) {
  TabularMdp mdp;
  std::string raw;
  int lineno = 0;
  bool have_gamma = false;
  std::vector<std::vector<bool>> seen_p;
  std::vector<bool> seen_policy;
  auto ensure_shape = [&](int line) {
    if (mdp.n_states == 0 || mdp.n_actions == 0) parse_error(line, "'states' and 'actions' must come first");
    if (mdp.transitions.empty()) {
      mdp.transitions.assign(mdp.n_actions, Matrix::Zero(mdp.n_states, mdp.n_states));
      mdp.policy = Matrix::Zero(mdp.n_states, mdp.n_actions);
      seen_p.assign(mdp.n_states, std::vector<bool>(mdp.n_actions, false));
      seen_policy.assign(mdp.n_states, false);
    }
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    for (char& ch : raw)
      if (ch == ':') ch = ' ';
    std::istringstream is(raw);
    std::string key;
    if (!(is >> key)) continue;
    try {
      if (key == "states" || key == "actions") {
        int n = 0;
        if (!(is >> n) || n < 1) parse_error(lineno, key + " needs a positive integer");
        (key == "states" ? mdp.n_states : mdp.n_actions) = n;
      } else if (key == "gamma") {
        if (!(is >> mdp.gamma)) parse_error(lineno, "gamma needs a number");
        have_gamma = true;
      } else if (key == "rho" || key == "cost") {
        ensure_shape(lineno);
        auto xs = read_numbers(is);
        if (static_cast<int>(xs.size()) != mdp.n_states)
          parse_error(lineno, key + " needs " + std::to_string(mdp.n_states) + " entries");
        (key == "rho" ? mdp.rho : mdp.cost) = to_vector(xs);
      } else if (key == "policy") {
        ensure_shape(lineno);
        int s = -1;
        if (!(is >> s) || s < 0 || s >= mdp.n_states) parse_error(lineno, "policy needs a state index");
        auto xs = read_numbers(is);
        if (static_cast<int>(xs.size()) != mdp.n_actions)
          parse_error(lineno, "policy row needs " + std::to_string(mdp.n_actions) + " entries");
        mdp.policy.row(s) = to_vector(xs).transpose();
        seen_policy[s] = true;
      } else if (key == "P") {
        ensure_shape(lineno);
        int s = -1, a = -1;
        if (!(is >> s >> a) || s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions)
          parse_error(lineno, "P needs a state and an action index");
        auto xs = read_numbers(is);
        if (static_cast<int>(xs.size()) != mdp.n_states)
          parse_error(lineno, "P row needs " + std::to_string(mdp.n_states) + " entries");
        mdp.transitions[a].row(s) = to_vector(xs).transpose();
        seen_p[s][a] = true;
      } else {
        parse_error(lineno, "unknown key '" + key + "'");
      }
    } catch (const ContractError& e) {
      const std::string msg = e.what();
      if (msg.rfind("mdp file", 0) == 0) throw;
      parse_error(lineno, msg);
    }
  }
  ensure_shape(lineno);
  if (!have_gamma) throw ContractError("mdp file: missing gamma");
  if (mdp.rho.size() == 0) throw ContractError("mdp file: missing rho");
  if (mdp.cost.size() == 0) throw ContractError("mdp file: missing cost");
  for (int s = 0; s < mdp.n_states; ++s) {
    if (!seen_policy[s]) throw ContractError("mdp file: missing policy row for state " + std::to_string(s));
    for (int a = 0; a < mdp.n_actions; ++a)
      if (!seen_p[s][a])
        throw ContractError("mdp file: missing P row for state " + std::to_string(s) + ", action " +
                            std::to_string(a));
  }
  mdp.validate();
  return mdp;
}

TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open mdp file '" + path + "'");
  return parse_mdp(in);
}

void write_mdp(std::ostream& out, const TabularMdp& mdp) {
  const auto old = out.precision(17);
  out << "states " << mdp.n_states << "\nactions " << mdp.n_actions << "\ngamma " << mdp.gamma << "\nrho";
  for (int s = 0; s < mdp.n_states; ++s) out << ' ' << mdp.rho[s];
  out << "\ncost";
  for (int s = 0; s < mdp.n_states; ++s) out << ' ' << mdp.cost[s];
  out << '\n';
  for (int s = 0; s < mdp.n_states; ++s) {
    out << "policy " << s << " :";
    for (int a = 0; a < mdp.n_actions; ++a) out << ' ' << mdp.policy(s, a);
    out << '\n';
  }
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      out << "P " << s << ' ' << a << " :";
      for (int t = 0; t < mdp.n_states; ++t) out << ' ' << mdp.transitions[a](s, t);
      out << '\n';
    }
  out.precision(old);
}

// ---------------------------------------------------------------------------

Vector exact_lyapunov(const TabularMdp& mdp) {
  mdp.validate();
  const Matrix p = mdp.policy_transition();
  const Matrix system = Matrix::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p;
  Eigen::FullPivLU<Matrix> lu(system);
  if (!lu.isInvertible()) throw NumericalError("exact_lyapunov: singular system");
  Vector l = lu.solve(mdp.cost);
  // One refinement step keeps the Bellman residual at rounding level.
  l += lu.solve(mdp.cost - system * l);
  return l;
}

Vector tabular_delta_l(const TabularMdp& mdp, const Vector& lyapunov, double k, double lambda) {
  const Vector next = mdp.policy_transition() * lyapunov;
  return next - lyapunov + k * (lyapunov - lambda * next);
}

void BoundReport::finalize() {
  satisfied = measured <= bound + 1e-12;
  margin = bound - measured;
}

std::string to_json_line(const BoundReport& r) {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return nullptr;
    return x > 0 ? "inf" : "-inf";
  };
  nlohmann::json j;
  j["check"] = r.check;
  j["label"] = r.label;
  j["measured"] = num(r.measured);
  j["bound"] = num(r.bound);
  j["satisfied"] = r.satisfied;
  j["q"] = num(r.q);
  j["M"] = r.samples_m;
  j["T"] = r.horizon_t;
  j["alpha"] = num(r.deviation_level);
  j["margin"] = num(r.margin);
  nlohmann::json diag = nlohmann::json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = num(v);
  j["diagnostics"] = diag;
  return j.dump();
}

std::vector<BoundReport> candidate_bound_check(const TabularMdp& mdp, const Vector& lyapunov) {
  require(lyapunov.size() == mdp.n_states, "candidate_bound_check: dimension mismatch");
  const double cmax = mdp.max_cost();
  const Matrix p = mdp.policy_transition();

  BoundReport bound;
  bound.check = "candidate-bound";
  bound.measured = lyapunov.maxCoeff();
  bound.bound = cmax / (1.0 - mdp.gamma);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < mdp.n_states; ++s) {
    if (mdp.cost[s] <= 0.0) continue;
    const double ratio = lyapunov[s] / mdp.cost[s];
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  if (std::isfinite(lo)) {
    bound.diagnostics["alpha_ratio"] = lo;
    bound.diagnostics["beta_ratio"] = hi;
  }
  bound.diagnostics["min_lyapunov"] = lyapunov.minCoeff();
  bound.finalize();

  BoundReport bellman;
  bellman.check = "bellman-identity";
  bellman.measured = (lyapunov - mdp.cost - mdp.gamma * p * lyapunov).cwiseAbs().maxCoeff();
  bellman.bound = 1e-10;
  bellman.finalize();
  return {bound, bellman};
}

// ---------------------------------------------------------------------------

bool is_ergodic(const Matrix& transition) {
  const Eigen::Index n = transition.rows();
  using Bool = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
  Bool a = (transition.array() > 0.0).cast<int>().matrix();
  // Primitive iff A^m > 0 for m = (n - 1)^2 + 1 (Wielandt); square until past it.
  const long needed = (n - 1) * (n - 1) + 1;
  long power = 1;
  while (power < needed) {
    a = ((a * a).array() > 0).cast<int>().matrix();
    power *= 2;
  }
  return (a.array() > 0).all();
}

Vector stationary_distribution(const Matrix& transition) {
  const Eigen::Index n = transition.rows();
  Matrix system = transition.transpose() - Matrix::Identity(n, n);
  system.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs[n - 1] = 1.0;
  Eigen::FullPivLU<Matrix> lu(system);
  Vector omega = lu.solve(rhs);
  omega += lu.solve(rhs - system * omega);
  // Polish with power iteration until the fixed point holds to 1e-12.
  for (int it = 0; it < 1000; ++it) {
    Vector next = transition.transpose() * omega;
    next /= next.sum();
    const double change = (next - omega).cwiseAbs().sum();
    omega = std::move(next);
    if (change <= 1e-15) break;
  }
  return omega;
}

Distributions distributions(const TabularMdp& mdp, int horizon) {
  mdp.validate();
  require(horizon >= 1, "distributions: horizon must be >= 1");
  const Matrix p = mdp.policy_transition();
  if (!is_ergodic(p)) throw ErgodicityError("distributions: P_pi is not irreducible and aperiodic");
  Distributions d;
  d.stationary = stationary_distribution(p);
  d.marginals.reserve(horizon + 1);
  d.marginals.push_back(mdp.rho);
  d.finite_average = Vector::Zero(mdp.n_states);
  const Matrix pt = p.transpose();
  for (int t = 1; t <= horizon; ++t) {
    d.marginals.push_back(pt * d.marginals.back());
    d.finite_average += d.marginals.back();
  }
  d.finite_average /= static_cast<double>(horizon);
  return d;
}

std::vector<BoundReport> check_theorem3(const TabularMdp& mdp, double k, double lambda,
                                        const std::vector<int>& horizons) {
  require(lambda > 0.0 && lambda <= mdp.gamma, "check_theorem3: need 0 < lambda <= gamma");
  require(k >= 0.0, "check_theorem3: need k >= 0");
  require(!horizons.empty(), "check_theorem3: empty horizon grid");
  for (int t : horizons) require(t >= 1, "check_theorem3: horizons must be >= 1");

  const int t_max = *std::max_element(horizons.begin(), horizons.end());
  const Distributions d = distributions(mdp, t_max);
  const Vector l = exact_lyapunov(mdp);
  const Vector delta = tabular_delta_l(mdp, l, k, lambda);
  const double stationary_mean = d.stationary.dot(delta);

  // Running sums of the L1 mixing distance and of the marginals.
  std::vector<double> l1_sum(t_max + 1, 0.0);
  std::vector<Vector> marg_sum(t_max + 1, Vector::Zero(mdp.n_states));
  for (int t = 1; t <= t_max; ++t) {
    l1_sum[t] = l1_sum[t - 1] + (d.stationary - d.marginals[t]).cwiseAbs().sum();
    marg_sum[t] = marg_sum[t - 1] + d.marginals[t];
  }

  // Smallest q with S_T <= 2 T^q on the grid. T = 1 constrains nothing
  // because S_1 <= 2 always.
  double q = 0.0;
  for (int t : horizons) {
    if (t < 2 || l1_sum[t] <= 0.0) continue;
    q = std::max(q, std::log(l1_sum[t] / 2.0) / std::log(static_cast<double>(t)));
  }
  q = std::max(q, 0.0) + 1e-9;
  const bool q_valid = q < 1.0;

  const double scale = 2.0 * (k + 1.0) * mdp.max_cost() / (1.0 - mdp.gamma);
  std::vector<BoundReport> out;
  for (int t : horizons) {
    BoundReport r;
    r.check = "thm3";
    r.label = "T=" + std::to_string(t);
    r.horizon_t = t;
    r.q = q;
    const double finite_mean = (marg_sum[t] / static_cast<double>(t)).dot(delta);
    r.measured = std::abs(stationary_mean - finite_mean);
    r.bound = scale * std::pow(static_cast<double>(t), q - 1.0);
    r.diagnostics["mixing_l1_sum"] = l1_sum[t];
    r.diagnostics["delta_l_sup"] = delta.cwiseAbs().maxCoeff();
    r.finalize();
    if (!q_valid) r.satisfied = false;
    out.push_back(std::move(r));
  }
  return out;
}

double theorem4_bound(int m, double alpha, double k, double lambda, double gamma, double max_cost) {
  if (alpha == 0.0) return 2.0;
  const double spread = ((1.0 - k * lambda) * (1.0 - k * lambda) + (k - 1.0) * (k - 1.0)) * max_cost * max_cost;
  if (spread == 0.0) return 0.0;
  return 2.0 * std::exp(-m * alpha * alpha * (1.0 - gamma) * (1.0 - gamma) / spread);
}

namespace {

int draw_index(const double* cumulative, int n, double u) {
  for (int i = 0; i < n - 1; ++i)
    if (u < cumulative[i]) return i;
  return n - 1;
}

}  // namespace

std::vector<BoundReport> check_theorem4(const TabularMdp& mdp, double k, double lambda,
                                        const std::vector<int>& trajectory_counts, int horizon,
                                        const std::vector<double>& alphas, int reps, RngStream& rng) {
  mdp.validate();
  require(horizon >= 1 && reps >= 1, "check_theorem4: horizon and reps must be >= 1");
  for (int m : trajectory_counts) require(m >= 1, "check_theorem4: trajectory counts must be >= 1");
  for (double a : alphas) require(a >= 0.0, "check_theorem4: alpha must be >= 0");

  const int n = mdp.n_states;
  const Matrix p = mdp.policy_transition();
  const Vector l = exact_lyapunov(mdp);
  const Vector delta = tabular_delta_l(mdp, l, k, lambda);

  // Expected value of the trajectory average: marginals t = 1..T.
  Vector marginal = mdp.rho;
  Vector average = Vector::Zero(n);
  for (int t = 1; t <= horizon; ++t) {
    marginal = p.transpose() * marginal;
    average += marginal;
  }
  const double center = average.dot(delta) / horizon;

  // Row-major cumulative tables for sampling.
  std::vector<double> cum_rho(n), cum_p(static_cast<std::size_t>(n) * n);
  double acc = 0.0;
  for (int s = 0; s < n; ++s) cum_rho[s] = (acc += mdp.rho[s]);
  for (int s = 0; s < n; ++s) {
    acc = 0.0;
    for (int t = 0; t < n; ++t) cum_p[static_cast<std::size_t>(s) * n + t] = (acc += p(s, t));
  }
  const double next_coeff = 1.0 - k * lambda;
  const double here_coeff = 1.0 - k;

  std::vector<BoundReport> out;
  for (int m : trajectory_counts) {
    std::vector<double> deviations(reps);
    for (int rep = 0; rep < reps; ++rep) {
      double total = 0.0;
      for (int traj = 0; traj < m; ++traj) {
        int s = draw_index(cum_rho.data(), n, rng.uniform());
        s = draw_index(&cum_p[static_cast<std::size_t>(s) * n], n, rng.uniform());  // s_1
        for (int t = 1; t <= horizon; ++t) {
          const int next = draw_index(&cum_p[static_cast<std::size_t>(s) * n], n, rng.uniform());
          total += next_coeff * l[next] - here_coeff * l[s];
          s = next;
        }
      }
      deviations[rep] = std::abs(total / (static_cast<double>(m) * horizon) - center);
    }
    for (double alpha : alphas) {
      BoundReport r;
      r.check = "thm4";
      std::ostringstream label;
      label << "M=" << m << " alpha=" << alpha;
      r.label = label.str();
      r.samples_m = m;
      r.horizon_t = horizon;
      r.deviation_level = alpha;
      r.measured = static_cast<double>(std::count_if(deviations.begin(), deviations.end(),
                                                     [&](double d) { return d >= alpha; })) /
                   reps;
      r.bound = theorem4_bound(m, alpha, k, lambda, mdp.gamma, mdp.max_cost());
      r.diagnostics["reps"] = reps;
      r.diagnostics["center"] = center;
      r.finalize();
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double predicted_tracking_time(double k, double mu, double v0, double t0) {
  require(k > 0.0 && mu >= 0.0 && v0 >= 0.0, "predicted_tracking_time: need k > 0, mu >= 0, v0 >= 0");
  if (v0 == 0.0) return t0;
  if (mu == 0.0) return std::numeric_limits<double>::infinity();
  const double offset = std::numbers::sqrt2 / 2.0 * mu / k;
  return (1.0 / k) * std::log((offset + std::sqrt(v0)) / offset) + t0;
}

TrackingResult simulate_tracking(const TrackingSim& sim) {
  require(sim.k > 0.0 && sim.mu >= 0.0 && sim.v0 >= 0.0, "simulate_tracking: need k > 0, mu >= 0, v0 >= 0");
  const double dt = sim.dt > 0.0 ? sim.dt : std::min(0.001, 0.01 / sim.k);
  require(dt * sim.k <= 0.01 + 1e-15, "simulate_tracking: dt * k must be <= 0.01");

  auto reference = [&](double t) {
    const double tau = t - sim.t0;
    switch (sim.profile) {
      case ReferenceProfile::ConstantSlope: return sim.reference_start - sim.mu * tau;
      case ReferenceProfile::Sinusoid:
        return sim.reference_start + sim.mu / sim.omega * std::sin(sim.omega * tau);
    }
    return 0.0;
  };
  auto rhs = [&](double t, double w) { return -sim.k * (w - reference(t)); };
  auto value = [&](double t, double w) {
    const double e = w - reference(t);
    return 0.5 * e * e;
  };

  TrackingResult r;
  r.tolerance = 1e-6 * std::max(sim.v0, 1.0);
  r.predicted_time = predicted_tracking_time(sim.k, sim.mu, sim.v0, sim.t0);

  double horizon = 0.0;
  if (std::isfinite(r.predicted_time)) {
    horizon = std::max(r.predicted_time - sim.t0, 0.0);
  } else {
    // Pure exponential decay; give it ten times its decay time.
    horizon = std::max(std::log(std::max(sim.v0 / r.tolerance, 1.0)) / (2.0 * sim.k), 1.0);
  }
  const double t_end = sim.t0 + 10.0 * std::max(horizon, dt);

  double t = sim.t0;
  double w = sim.reference_start - std::sqrt(2.0 * sim.v0);
  r.times.push_back(t);
  r.values.push_back(value(t, w));
  if (r.values.back() <= r.tolerance) r.measured_time = t;
  if (r.predicted_time == sim.t0) r.value_at_predicted = r.values.back();

  bool passed_prediction = !std::isfinite(r.predicted_time) || r.predicted_time <= sim.t0;
  while (t < t_end) {
    double h = dt;
    // Land exactly on the predicted time.
    if (!passed_prediction && t + h >= r.predicted_time) h = r.predicted_time - t;
    if (h <= 0.0) h = dt;
    const double k1 = rhs(t, w);
    const double k2 = rhs(t + h / 2, w + h / 2 * k1);
    const double k3 = rhs(t + h / 2, w + h / 2 * k2);
    const double k4 = rhs(t + h, w + h * k3);
    w += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t = (!passed_prediction && h != dt) ? r.predicted_time : t + h;
    const double v = value(t, w);
    r.times.push_back(t);
    r.values.push_back(v);
    if (std::isnan(r.measured_time) && v <= r.tolerance) r.measured_time = t;
    if (!passed_prediction && t >= r.predicted_time) {
      passed_prediction = true;
      r.value_at_predicted = v;
    }
    if (passed_prediction && !std::isnan(r.measured_time)) break;
  }

  r.converged = !std::isnan(r.measured_time);
  if (std::isfinite(r.predicted_time)) {
    r.satisfied = r.converged && r.value_at_predicted <= r.tolerance &&
                  r.measured_time <= r.predicted_time;
  } else {
    r.satisfied = r.converged;
  }
  return r;
}

BoundReport tracking_report(const TrackingSim& sim, const TrackingResult& r) {
  BoundReport rep;
  rep.check = "lemma2";
  std::ostringstream label;
  label << "k=" << sim.k << " mu=" << sim.mu << " v0=" << sim.v0 << " t0=" << sim.t0;
  rep.label = label.str();
  rep.measured = std::isnan(r.value_at_predicted) ? std::numeric_limits<double>::infinity()
                                                  : r.value_at_predicted;
  rep.bound = r.tolerance;
  rep.diagnostics["predicted_time"] = r.predicted_time;
  rep.diagnostics["measured_time"] = r.measured_time;
  rep.diagnostics["converged"] = r.converged ? 1.0 : 0.0;
  if (std::isfinite(r.predicted_time)) {
    rep.finalize();
    rep.satisfied = r.satisfied;
  } else {
    rep.measured = r.converged ? 0.0 : std::numeric_limits<double>::infinity();
    rep.finalize();
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<RobustnessRow> robustness_sweep(const Env& env, const GaussianPolicy& policy,
                                            const LyapunovCritic* critic,
                                            const std::vector<double>& magnitudes, int trials,
                                            const RngStream& rng, int period, Waveform waveform) {
  std::vector<RobustnessRow> rows;
  for (double m : magnitudes) {
    require(m >= 0.0, "robustness_sweep: magnitudes must be >= 0");
    RngStream r = rng;
    const Disturbance d{m, period, waveform};
    const EvalResult ev = eval_policy(env, policy, critic, trials, r, &d);
    rows.push_back({m, ev.mean, ev.stddev});
  }
  return rows;
}

std::vector<RobustnessRow> robustness_sweep(const Env& env, const Controller& controller,
                                            const std::vector<double>& magnitudes, int trials,
                                            const RngStream& rng, int period, Waveform waveform) {
  std::vector<RobustnessRow> rows;
  for (double m : magnitudes) {
    require(m >= 0.0, "robustness_sweep: magnitudes must be >= 0");
    RngStream r = rng;
    const Disturbance d{m, period, waveform};
    const EvalResult ev = eval_controller(env, controller, trials, r, &d);
    rows.push_back({m, ev.mean, ev.stddev});
  }
  return rows;
}

}  // namespace alac
