#include "alac/config.hpp"

#include "alac/checkpoint.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <sstream>
#include <utility>

namespace alac {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "nan" || t == "auto") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(t.c_str(), &end);
  if (t.empty() || *end != '\0' || errno == ERANGE) bad(key, "expected a number, got '" + v + "'");
  if (!std::isfinite(x)) bad(key, "value must be finite");
  return x;
}

long to_long(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  char* end = nullptr;
  errno = 0;
  long x = std::strtol(t.c_str(), &end, 10);
  if (!t.empty() && *end != '\0') {
    // Accept integral values written as 1e5.
    const double d = std::strtod(t.c_str(), &end);
    if (*end != '\0' || d != std::floor(d) || std::abs(d) > 9e15) bad(key, "expected an integer, got '" + v + "'");
    x = static_cast<long>(d);
  }
  if (t.empty() || errno == ERANGE) bad(key, "expected an integer, got '" + v + "'");
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  const long x = to_long(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) bad(key, "integer out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad(key, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(key, s));
  return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(key, s));
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, double>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

Waveform to_waveform(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "sine") return Waveform::Sine;
  if (t == "square") return Waveform::Square;
  bad(key, "expected sine or square, got '" + v + "'");
}

std::string waveform_name(Waveform w) { return w == Waveform::Sine ? "sine" : "square"; }

ReferenceProfile to_profile(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "constant-slope") return ReferenceProfile::ConstantSlope;
  if (t == "sinusoid") return ReferenceProfile::Sinusoid;
  bad(key, "expected constant-slope or sinusoid, got '" + v + "'");
}

std::string profile_name(ReferenceProfile p) {
  return p == ReferenceProfile::ConstantSlope ? "constant-slope" : "sinusoid";
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) bad(key, what);
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Shorthand builders for the common field shapes.
template <class Get>
Field real(std::string section, std::string key, Get member, std::function<bool(double)> ok, std::string rule) {
  Field f;
  f.section = std::move(section);
  f.key = std::move(key);
  f.set = [member, ok, rule](RunConfig& c, const std::string& name, const std::string& v) {
    const double x = to_double(name, v);
    check(ok(x), name, rule);
    member(c) = x;
  };
  f.get = [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); };
  return f;
}

template <class Get>
Field integer(std::string section, std::string key, Get member, long lo, std::string rule) {
  Field f;
  f.section = std::move(section);
  f.key = std::move(key);
  f.set = [member, lo, rule](RunConfig& c, const std::string& name, const std::string& v) {
    const long x = to_long(name, v);
    check(x >= lo, name, rule);
    using T = std::remove_reference_t<decltype(member(c))>;
    if (std::cmp_greater(x, std::numeric_limits<T>::max())) bad(name, "integer out of range");
    member(c) = static_cast<T>(x);
  };
  f.get = [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    auto positive = [](double x) { return x > 0.0; };
    auto nonneg = [](double x) { return x >= 0.0; };
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    auto discount = [](double x) { return x > 0.0 && x < 1.0; };
    auto any = [](double x) { return std::isfinite(x); };

    // [run]
    t.push_back({"run", "env",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   const std::string e = trim(v);
                   try {
                     (void)env_parameter_names(e);
                   } catch (const ContractError&) {
                     bad(n, "unknown environment '" + e + "'");
                   }
                   c.env = e;
                 },
                 [](const RunConfig& c) { return c.env; }});
    t.push_back({"run", "seed",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   const long x = to_long(n, v);
                   check(x >= 0, n, "must be >= 0");
                   c.seed = static_cast<std::uint64_t>(x);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.push_back({"run", "out_dir",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   check(!trim(v).empty(), n, "must not be empty");
                   c.out_dir = trim(v);
                 },
                 [](const RunConfig& c) { return c.out_dir; }});
    t.push_back(integer("run", "jobs", [](RunConfig& c) -> int& { return c.jobs; }, 1, "must be >= 1"));

    // [train]
    t.push_back(real("train", "lr_actor", [](RunConfig& c) -> double& { return c.train.lr_actor; }, positive, "must be > 0"));
    t.push_back(real("train", "lr_lyapunov", [](RunConfig& c) -> double& { return c.train.lr_lyapunov; }, positive, "must be > 0"));
    t.push_back(real("train", "lr_multipliers", [](RunConfig& c) -> double& { return c.train.lr_multipliers; }, positive, "must be > 0"));
    t.push_back(real("train", "gamma", [](RunConfig& c) -> double& { return c.train.gamma; }, discount, "must lie in (0, 1)"));
    t.push_back(real("train", "polyak", [](RunConfig& c) -> double& { return c.train.polyak; }, unit, "must lie in [0, 1]"));
    t.push_back(integer("train", "batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; }, 1, "must be >= 1"));
    t.push_back(integer("train", "buffer_capacity", [](RunConfig& c) -> std::size_t& { return c.train.buffer_capacity; }, 1, "must be >= 1"));
    t.push_back(integer("train", "episode_length", [](RunConfig& c) -> int& { return c.train.episode_length; }, 0, "must be >= 0"));
    t.push_back({"train", "total_steps",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   const std::string s = trim(v);
                   if (s == "auto") {
                     c.total_steps.reset();
                     return;
                   }
                   const long x = to_long(n, s);
                   check(x >= 0, n, "must be >= 0");
                   c.total_steps = x;
                 },
                 [](const RunConfig& c) { return c.total_steps ? std::to_string(*c.total_steps) : std::string("auto"); }});
    t.push_back(integer("train", "updates_per_episode", [](RunConfig& c) -> int& { return c.train.updates_per_episode; }, 0, "must be >= 0"));
    t.push_back({"train", "entropy_target",
                 [](RunConfig& c, const std::string& n, const std::string& v) { c.train.entropy_target = to_double(n, v); },
                 [](const RunConfig& c) {
                   return std::isnan(c.train.entropy_target) ? std::string("auto") : format_double(c.train.entropy_target);
                 }});
    t.push_back({"train", "mode",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   try {
                     c.train.mode = mode_from_string(trim(v));
                   } catch (const ContractError&) {
                     bad(n, "unknown certification mode '" + trim(v) + "'");
                   }
                 },
                 [](const RunConfig& c) { return to_string(c.train.mode); }});
    t.push_back(real("train", "fixed_k", [](RunConfig& c) -> double& { return c.train.fixed_k; }, unit, "must lie in [0, 1]"));
    t.push_back({"train", "actor_hidden",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   auto xs = to_int_list(n, v);
                   for (int x : xs) check(x >= 1, n, "widths must be >= 1");
                   c.train.actor_hidden = xs;
                 },
                 [](const RunConfig& c) { return join(c.train.actor_hidden); }});
    t.push_back({"train", "critic_layers",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   auto xs = to_int_list(n, v);
                   check(!xs.empty(), n, "needs at least the output width");
                   for (int x : xs) check(x >= 1, n, "widths must be >= 1");
                   c.train.critic_layers = xs;
                 },
                 [](const RunConfig& c) { return join(c.train.critic_layers); }});
    t.push_back({"train", "critic_activation",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   Activation a{};
                   try {
                     a = activation_from_string(trim(v));
                   } catch (const ContractError&) {
                     bad(n, "unknown activation '" + trim(v) + "'");
                   }
                   check(a != Activation::Identity, n, "hidden activation must be relu or tanh");
                   c.train.critic_activation = a;
                 },
                 [](const RunConfig& c) { return to_string(c.train.critic_activation); }});
    t.push_back(real("train", "lambda_l_init", [](RunConfig& c) -> double& { return c.train.lambda_l_init; }, unit, "must lie in [0, 1]"));
    t.push_back(real("train", "lambda_e_init", [](RunConfig& c) -> double& { return c.train.lambda_e_init; }, nonneg, "must be >= 0"));
    t.push_back(integer("train", "warmup_factor", [](RunConfig& c) -> int& { return c.train.warmup_factor; }, 1, "must be >= 1"));
    t.push_back(real("train", "gs_eps", [](RunConfig& c) -> double& { return c.train.gs_eps; }, positive, "must be > 0"));
    t.push_back({"train", "learning_enabled",
                 [](RunConfig& c, const std::string& n, const std::string& v) { c.train.learning_enabled = to_bool(n, v); },
                 [](const RunConfig& c) { return std::string(c.train.learning_enabled ? "true" : "false"); }});

    // [eval]
    t.push_back({"eval", "checkpoint",
                 [](RunConfig& c, const std::string&, const std::string& v) { c.eval.checkpoint = trim(v); },
                 [](const RunConfig& c) { return c.eval.checkpoint; }});
    t.push_back(integer("eval", "trials", [](RunConfig& c) -> int& { return c.eval.trials; }, 1, "must be >= 1"));
    t.push_back(real("eval", "disturbance", [](RunConfig& c) -> double& { return c.eval.disturbance; }, nonneg, "must be >= 0"));
    t.push_back(integer("eval", "period", [](RunConfig& c) -> int& { return c.eval.period; }, 1, "must be >= 1"));
    t.push_back({"eval", "waveform",
                 [](RunConfig& c, const std::string& n, const std::string& v) { c.eval.waveform = to_waveform(n, v); },
                 [](const RunConfig& c) { return waveform_name(c.eval.waveform); }});
    t.push_back(integer("eval", "episode_length", [](RunConfig& c) -> int& { return c.eval.episode_length; }, 0, "must be >= 0"));

    // [robustness]
    t.push_back({"robustness", "magnitudes",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   auto xs = to_double_list(n, v);
                   check(!xs.empty(), n, "needs at least one magnitude");
                   for (double x : xs) check(x >= 0.0, n, "magnitudes must be >= 0");
                   c.robustness.magnitudes = xs;
                 },
                 [](const RunConfig& c) { return join(c.robustness.magnitudes); }});
    t.push_back(integer("robustness", "trials", [](RunConfig& c) -> int& { return c.robustness.trials; }, 1, "must be >= 1"));
    t.push_back(integer("robustness", "period", [](RunConfig& c) -> int& { return c.robustness.period; }, 1, "must be >= 1"));
    t.push_back({"robustness", "waveform",
                 [](RunConfig& c, const std::string& n, const std::string& v) { c.robustness.waveform = to_waveform(n, v); },
                 [](const RunConfig& c) { return waveform_name(c.robustness.waveform); }});

    // [verify]
    t.push_back({"verify", "mdp_file",
                 [](RunConfig& c, const std::string&, const std::string& v) { c.verify.mdp_file = trim(v); },
                 [](const RunConfig& c) { return c.verify.mdp_file; }});
    t.push_back(integer("verify", "instances", [](RunConfig& c) -> int& { return c.verify.instances; }, 1, "must be >= 1"));
    t.push_back(integer("verify", "states", [](RunConfig& c) -> int& { return c.verify.states; }, 1, "must be >= 1"));
    t.push_back(integer("verify", "actions", [](RunConfig& c) -> int& { return c.verify.actions; }, 1, "must be >= 1"));
    t.push_back(real("verify", "gamma", [](RunConfig& c) -> double& { return c.verify.gamma; }, discount, "must lie in (0, 1)"));
    t.push_back(real("verify", "mix_eps", [](RunConfig& c) -> double& { return c.verify.mix_eps; }, unit, "must lie in [0, 1]"));
    t.push_back(real("verify", "k", [](RunConfig& c) -> double& { return c.verify.k; }, unit, "must lie in [0, 1]"));
    t.push_back(real("verify", "lambda", [](RunConfig& c) -> double& { return c.verify.lambda; }, positive, "must be > 0"));
    t.push_back({"verify", "horizons",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   auto xs = to_int_list(n, v);
                   check(!xs.empty(), n, "needs at least one horizon");
                   for (int x : xs) check(x >= 1, n, "horizons must be >= 1");
                   c.verify.horizons = xs;
                 },
                 [](const RunConfig& c) { return join(c.verify.horizons); }});
    t.push_back({"verify", "trajectories",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   auto xs = to_int_list(n, v);
                   check(!xs.empty(), n, "needs at least one count");
                   for (int x : xs) check(x >= 1, n, "counts must be >= 1");
                   c.verify.trajectories = xs;
                 },
                 [](const RunConfig& c) { return join(c.verify.trajectories); }});
    t.push_back(integer("verify", "horizon", [](RunConfig& c) -> int& { return c.verify.horizon; }, 1, "must be >= 1"));
    t.push_back({"verify", "alphas",
                 [](RunConfig& c, const std::string& n, const std::string& v) {
                   auto xs = to_double_list(n, v);
                   check(!xs.empty(), n, "needs at least one level");
                   for (double x : xs) check(x >= 0.0, n, "levels must be >= 0");
                   c.verify.alphas = xs;
                 },
                 [](const RunConfig& c) { return join(c.verify.alphas); }});
    t.push_back(integer("verify", "reps", [](RunConfig& c) -> int& { return c.verify.reps; }, 1, "must be >= 1"));
    t.push_back(real("verify", "track_k", [](RunConfig& c) -> double& { return c.verify.track_k; }, positive, "must be > 0"));
    t.push_back(real("verify", "track_mu", [](RunConfig& c) -> double& { return c.verify.track_mu; }, nonneg, "must be >= 0"));
    t.push_back(real("verify", "track_v0", [](RunConfig& c) -> double& { return c.verify.track_v0; }, nonneg, "must be >= 0"));
    t.push_back(real("verify", "track_t0", [](RunConfig& c) -> double& { return c.verify.track_t0; }, any, "must be finite"));
    t.push_back(real("verify", "track_dt", [](RunConfig& c) -> double& { return c.verify.track_dt; }, nonneg, "must be >= 0"));
    t.push_back(real("verify", "track_omega", [](RunConfig& c) -> double& { return c.verify.track_omega; }, positive, "must be > 0"));
    t.push_back({"verify", "track_profile",
                 [](RunConfig& c, const std::string& n, const std::string& v) { c.verify.track_profile = to_profile(n, v); },
                 [](const RunConfig& c) { return profile_name(c.verify.track_profile); }});
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

}  // namespace

long default_total_steps(const std::string& env) {
  if (env == "lintrack") return 20000;
  return 300000;
}

long RunConfig::resolved_total_steps() const { return total_steps ? *total_steps : default_total_steps(env); }

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.total_steps = resolved_total_steps();
  return t;
}

void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  const std::string name = section + "." + key;
  if (section == "env") {
    cfg.env_params[key] = to_double(name, value);
    return;
  }
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("config key '" + name + "': unknown key");
  f->set(cfg, name, value);
}

void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& source) {
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "env" && std::none_of(fields().begin(), fields().end(),
                                           [&](const Field& f) { return f.section == section; }))
        throw ConfigError(where + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      apply_override(cfg, key + "=" + value);
    } else {
      try {
        set_config_value(cfg, section, key, value);
      } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
      }
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(cfg, in, path);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    set_config_value(cfg, key.substr(0, dot), key.substr(dot + 1), value);
    return;
  }
  std::vector<const Field*> hits;
  for (const auto& f : fields())
    if (f.key == key) hits.push_back(&f);
  if (hits.empty()) throw ConfigError("config key '" + key + "': unknown key");
  if (hits.size() > 1) {
    // Bare keys shared with train belong to train.
    for (const Field* f : hits)
      if (f->section == "train" || f->section == "run") {
        f->set(cfg, f->section + "." + key, value);
        return;
      }
    std::string sections;
    for (const Field* f : hits) sections += (sections.empty() ? "" : ", ") + f->section;
    throw ConfigError("config key '" + key + "': ambiguous, qualify it with a section (" + sections + ")");
  }
  hits.front()->set(cfg, hits.front()->section + "." + key, value);
}

void validate_config(const RunConfig& cfg) {
  const auto names = env_parameter_names(cfg.env);
  for (const auto& [k, v] : cfg.env_params)
    if (std::find(names.begin(), names.end(), k) == names.end())
      throw ConfigError("config key 'env." + k + "': unknown parameter for environment '" + cfg.env + "'");
  try {
    (void)make_env(cfg.env, cfg.env_params);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config section 'env': ") + e.what());
  }
  try {
    cfg.resolved_train().validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config section 'train': ") + e.what());
  }
  if (cfg.verify.lambda > cfg.verify.gamma)
    throw ConfigError("config key 'verify.lambda': must be <= verify.gamma");
}

RunConfig parse_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (path) apply_config_file(cfg, *path);
  for (const auto& o : overrides) apply_override(cfg, o);
  validate_config(cfg);
  return cfg;
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.section + "." + f.key, f.get(cfg));
  for (const auto& [k, v] : cfg.env_params) out.emplace_back("env." + k, format_double(v));
  return out;
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      section = f.section;
      os << (os.tellp() > 0 ? "\n" : "") << "[" << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << "\n";
  }
  if (!cfg.env_params.empty()) {
    os << "\n[env]\n";
    for (const auto& [k, v] : cfg.env_params) os << k << " = " << format_double(v) << "\n";
  }
  return os.str();
}

}  // namespace alac
