#include "alac/commands.hpp"

#include "alac/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#ifndef ALAC_VERSION
#define ALAC_VERSION "0.0.0"
#endif

namespace alac {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* version_string() { return "alac " ALAC_VERSION; }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = std::clamp(jobs, 1, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int run_command(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitRuntime;
  }
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json num(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

// Output directory bookkeeping: every file goes through here so the
// manifest inventory is complete.
class RunDir {
 public:
  RunDir(const RunConfig& cfg, std::string command)
      : dir_(cfg.out_dir), command_(std::move(command)), started_(utc_now()) {
    fs::create_directories(dir_);
    manifest_["tool"] = "alac";
    manifest_["version"] = version_string();
    manifest_["version_hash"] = "fnv1a64:" + hex64(fnv1a64(version_string()));
    manifest_["command"] = command_;
    manifest_["seed"] = cfg.seed;
    json config = json::object();
    for (const auto& [k, v] : config_entries(cfg)) config[k] = v;
    manifest_["config"] = config;
  }

  fs::path path(const std::string& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    return dir_ / name;
  }

  // Atomic text write.
  void write(const std::string& name, const std::string& text) {
    const fs::path p = path(name);
    const fs::path tmp = p.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << text;
      if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    }
    fs::rename(tmp, p);
  }

  json& manifest() { return manifest_; }

  void finish(const std::string& status) {
    manifest_["started"] = started_;
    manifest_["finished"] = utc_now();
    manifest_["status"] = status;
    json files = json::array();
    for (const auto& name : files_) {
      const fs::path p = dir_ / name;
      if (!fs::exists(p)) continue;
      const std::string bytes = read_file(p);
      files.push_back({{"name", name}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}});
    }
    manifest_["files"] = files;
    const fs::path p = dir_ / "manifest.json";
    const fs::path tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << manifest_.dump(2) << "\n";
      if (!out) throw std::runtime_error("cannot write manifest");
    }
    fs::rename(tmp, p);
  }

 private:
  fs::path dir_;
  std::string command_;
  std::string started_;
  std::vector<std::string> files_;
  json manifest_;
};

// Finishes the manifest on any exit path, marking failures.
template <class F>
int with_manifest(RunDir& run, F&& body) {
  try {
    const int code = body();
    run.finish(code == kExitOk ? "ok" : (code == kExitBoundViolated ? "bound-violated" : "failed"));
    return code;
  } catch (const std::exception& e) {
    run.manifest()["error"] = e.what();
    run.finish("failed");
    throw;
  }
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double final_window_mean(const std::vector<MetricsRecord>& m, std::size_t window) {
  if (m.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(window, m.size());
  double s = 0.0;
  for (std::size_t i = m.size() - n; i < m.size(); ++i) s += m[i].cost_return;
  return s / static_cast<double>(n);
}

std::string checkpoint_path(const RunConfig& cfg) {
  if (cfg.eval.checkpoint.empty()) throw ContractError("no checkpoint given (use --checkpoint or eval.checkpoint)");
  if (!fs::exists(cfg.eval.checkpoint)) throw ContractError("checkpoint '" + cfg.eval.checkpoint + "' does not exist");
  return cfg.eval.checkpoint;
}

// The manifest sitting next to a checkpoint, if there is one.
json source_manifest(const std::string& ckpt_path) {
  const fs::path p = fs::path(ckpt_path).parent_path() / "manifest.json";
  json ref;
  ref["checkpoint"] = ckpt_path;
  ref["checkpoint_fnv1a64"] = hex64(fnv1a64(read_file(ckpt_path)));
  if (!fs::exists(p)) {
    ref["manifest"] = nullptr;
    return ref;
  }
  ref["manifest"] = p.string();
  try {
    const json m = json::parse(read_file(p));
    ref["manifest_fnv1a64"] = hex64(fnv1a64(read_file(p)));
    for (const char* key : {"version_hash", "seed"})
      if (m.contains(key)) ref[key] = m[key];
    if (m.contains("summary") && m["summary"].contains("random_policy_baseline"))
      ref["random_policy_baseline"] = m["summary"]["random_policy_baseline"];
  } catch (const json::exception&) {
    ref["manifest_error"] = "unreadable";
  }
  return ref;
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  RunDir run(cfg, "train");
  return with_manifest(run, [&] {
    const auto env = make_env(cfg.env, cfg.env_params);
    const TrainConfig tc = cfg.resolved_train();

    std::ofstream csv(run.path("metrics.csv"), std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open metrics.csv");
    csv << metrics_header() << "\n";
    csv.flush();
    long rows = 0;
    const auto sink = [&](const MetricsRecord& r) {
      csv << metrics_row(r) << "\n";
      if (++rows % 10 == 0) {
        csv.flush();
        log << "episode " << r.episode << " step " << r.step << " cost_return " << r.cost_return << "\n";
      }
    };
    TrainResult result = train(tc, *env, cfg.seed, sink);
    csv.flush();
    csv.close();

    save_checkpoint(run.path("checkpoint.bin").string(), agent_checkpoint(result.agent, cfg.env));

    json summary;
    summary["episodes"] = result.metrics.size();
    summary["total_steps"] = tc.total_steps;
    summary["final_cost_return"] = num(final_window_mean(result.metrics, 10));
    json baseline = nullptr;
    if (tc.learning_enabled && tc.total_steps > 0) {
      TrainConfig zero = tc;
      zero.learning_enabled = false;
      const TrainResult base = train(zero, *env, cfg.seed);
      std::vector<double> returns;
      for (const auto& r : base.metrics) returns.push_back(r.cost_return);
      baseline = {{"episodes", returns.size()},
                  {"mean_cost_return", num(mean_of(returns))},
                  {"final_cost_return", num(final_window_mean(base.metrics, 10))}};
    }
    summary["random_policy_baseline"] = baseline;
    summary["multipliers"] = {{"lambda_l", result.agent.multipliers.lambda_l},
                              {"lambda_e", result.agent.multipliers.lambda_e},
                              {"lambda", result.agent.multipliers.lambda},
                              {"k", result.agent.multipliers.k}};
    run.manifest()["summary"] = summary;
    log << "trained " << result.metrics.size() << " episodes; final cost return "
        << summary["final_cost_return"].dump() << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  const std::string ckpt_path = checkpoint_path(cfg);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto env = make_env(cfg.env, cfg.env_params);
  check_compatible(ckpt, *env);
  const Agent agent = agent_from_checkpoint(ckpt);

  RunDir run(cfg, "eval");
  return with_manifest(run, [&] {
    const json ref = source_manifest(ckpt_path);
    run.manifest()["source"] = ref;
    RngStream rng = RngStream(cfg.seed).derive(6);
    const Disturbance d{cfg.eval.disturbance, cfg.eval.period, cfg.eval.waveform};
    const EvalResult ev = eval_policy(*env, agent.policy, &agent.critic, cfg.eval.trials, rng, &d,
                                      cfg.eval.episode_length);

    std::ostringstream returns, traces;
    returns << "trial,cost_return\n";
    traces << "trial,t,cost,lyapunov\n";
    for (std::size_t i = 0; i < ev.cost_returns.size(); ++i) {
      returns << i << "," << format_double(ev.cost_returns[i]) << "\n";
      for (std::size_t t = 0; t < ev.cost_traces[i].size(); ++t) {
        traces << i << "," << t << "," << format_double(ev.cost_traces[i][t]) << ",";
        if (t < ev.lyapunov_traces[i].size()) traces << format_double(ev.lyapunov_traces[i][t]);
        traces << "\n";
      }
    }
    run.write("eval.csv", returns.str());
    run.write("traces.csv", traces.str());

    json summary{{"trials", cfg.eval.trials}, {"mean_cost_return", num(ev.mean)}, {"std_cost_return", num(ev.stddev)}};
    if (ref.contains("random_policy_baseline") && ref["random_policy_baseline"].is_object()) {
      const json& b = ref["random_policy_baseline"];
      if (b.contains("mean_cost_return") && b["mean_cost_return"].is_number()) {
        const double base = b["mean_cost_return"].get<double>();
        summary["random_policy_baseline"] = base;
        summary["below_baseline"] = ev.mean < base;
      }
    }
    run.manifest()["summary"] = summary;
    log << "eval: mean cost return " << ev.mean << " (std " << ev.stddev << ") over " << cfg.eval.trials
        << " trials\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_robustness(const RunConfig& cfg, std::ostream& log) {
  validate_config(cfg);
  const std::string ckpt_path = checkpoint_path(cfg);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto env = make_env(cfg.env, cfg.env_params);
  check_compatible(ckpt, *env);
  const Agent agent = agent_from_checkpoint(ckpt);

  RunDir run(cfg, "robustness");
  return with_manifest(run, [&] {
    run.manifest()["source"] = source_manifest(ckpt_path);
    const RngStream rng = RngStream(cfg.seed).derive(6);
    const auto& mags = cfg.robustness.magnitudes;
    std::vector<RobustnessRow> rows(mags.size());
    parallel_for(static_cast<int>(mags.size()), cfg.jobs, [&](int i) {
      rows[i] = robustness_sweep(*env, agent.policy, &agent.critic, {mags[i]}, cfg.robustness.trials, rng,
                                 cfg.robustness.period, cfg.robustness.waveform)
                    .front();
    });
    std::ostringstream os;
    os << "magnitude,mean_cost_return,std_cost_return\n";
    json table = json::array();
    for (const auto& r : rows) {
      os << format_double(r.magnitude) << "," << format_double(r.mean) << "," << format_double(r.stddev) << "\n";
      table.push_back({{"magnitude", r.magnitude}, {"mean", num(r.mean)}, {"std", num(r.stddev)}});
      log << "magnitude " << r.magnitude << ": " << r.mean << " +- " << r.stddev << "\n";
    }
    run.write("robustness.csv", os.str());
    run.manifest()["summary"] = {{"rows", table}};
    return static_cast<int>(kExitOk);
  });
}

int cmd_verify(const RunConfig& cfg, const std::string& check, std::ostream& log) {
  validate_config(cfg);
  if (check != "lemma2" && check != "thm3" && check != "thm4" && check != "bound")
    throw ConfigError("unknown verify check '" + check + "' (expected lemma2, thm3, thm4 or bound)");
  const VerifySettings& v = cfg.verify;
  std::optional<TabularMdp> file_mdp;
  if (check != "lemma2" && !v.mdp_file.empty()) file_mdp = load_mdp(v.mdp_file);

  RunDir run(cfg, "verify");
  run.manifest()["check"] = check;
  return with_manifest(run, [&] {
    if (file_mdp) run.manifest()["mdp_file"] = {{"path", v.mdp_file}, {"fnv1a64", hex64(fnv1a64(read_file(v.mdp_file)))}};
    const RngStream root(cfg.seed);
    const int count = file_mdp ? 1 : v.instances;
    std::vector<std::vector<BoundReport>> per_instance(count);

    auto instance_mdp = [&](int i) {
      if (file_mdp) return *file_mdp;
      RngStream r = root.derive(1000 + static_cast<std::uint64_t>(i));
      return random_mdp(v.states, v.actions, v.gamma, r, v.mix_eps);
    };

    parallel_for(count, cfg.jobs, [&](int i) {
      std::vector<BoundReport> reps;
      if (check == "lemma2") {
        TrackingSim sim;
        sim.t0 = v.track_t0;
        sim.dt = v.track_dt;
        sim.profile = v.track_profile;
        sim.omega = v.track_omega;
        if (v.instances == 1) {
          sim.k = v.track_k;
          sim.mu = v.track_mu;
          sim.v0 = v.track_v0;
        } else {
          RngStream r = root.derive(3000 + static_cast<std::uint64_t>(i));
          sim.k = r.uniform(0.1, 5.0);
          sim.mu = r.uniform(0.0, 2.0);
          sim.v0 = r.uniform(0.01, 4.0);
        }
        const TrackingResult res = simulate_tracking(sim);
        reps.push_back(tracking_report(sim, res));
      } else {
        const TabularMdp mdp = instance_mdp(i);
        if (check == "thm3") {
          reps = check_theorem3(mdp, v.k, v.lambda, v.horizons);
        } else if (check == "thm4") {
          RngStream r = root.derive(2000 + static_cast<std::uint64_t>(i));
          reps = check_theorem4(mdp, v.k, v.lambda, v.trajectories, v.horizon, v.alphas, v.reps, r);
        } else {
          reps = candidate_bound_check(mdp, exact_lyapunov(mdp));
        }
      }
      for (auto& r : reps) r.label = "instance=" + std::to_string(i) + (r.label.empty() ? "" : " " + r.label);
      per_instance[i] = std::move(reps);
    });

    std::ostringstream lines;
    int total = 0, violated = 0;
    for (const auto& reps : per_instance)
      for (const auto& r : reps) {
        lines << to_json_line(r) << "\n";
        ++total;
        if (!r.satisfied) ++violated;
      }
    run.write("reports.jsonl", lines.str());
    run.manifest()["summary"] = {{"reports", total}, {"violations", violated}};
    log << "verify " << check << ": " << total << " reports, " << violated << " violated\n";
    return static_cast<int>(violated ? kExitBoundViolated : kExitOk);
  });
}

}  // namespace alac
