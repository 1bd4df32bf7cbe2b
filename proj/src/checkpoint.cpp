#include "alac/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace alac {

namespace {

constexpr char kMagic[8] = {'A', 'L', 'A', 'C', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_f64(std::ostream& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw ContractError("checkpoint: truncated file");
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  get_bytes(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

std::string get_str(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  if (n > (1u << 24)) throw ContractError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n) get_bytes(in, s.data(), n);
  return s;
}

std::uint8_t activation_code(Activation a) {
  switch (a) {
    case Activation::Relu: return 0;
    case Activation::Tanh: return 1;
    case Activation::Identity: return 2;
  }
  return 2;
}

Activation activation_of_code(std::uint8_t c) {
  switch (c) {
    case 0: return Activation::Relu;
    case 1: return Activation::Tanh;
    case 2: return Activation::Identity;
  }
  throw ContractError("checkpoint: unknown activation code " + std::to_string(c));
}

double parse_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0') throw ContractError("checkpoint: metadata '" + key + "' is not a number");
  return v;
}

}  // namespace

const MlpParams& Checkpoint::net(const std::string& name) const {
  for (const auto& [n, p] : nets)
    if (n == name) return p;
  throw ContractError("checkpoint: no network named '" + name + "'");
}

bool Checkpoint::has_net(const std::string& name) const {
  for (const auto& entry : nets)
    if (entry.first == name) return true;
  return false;
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw ContractError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(ckpt.nets.size()));
  for (const auto& [name, params] : ckpt.nets) {
    const MlpSpec& spec = params.spec();
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(spec.layer_sizes.size()));
    for (int s : spec.layer_sizes) put_u32(out, static_cast<std::uint32_t>(s));
    for (Activation a : spec.activations) out.put(static_cast<char>(activation_code(a)));
    for (int l = 0; l < spec.num_layers(); ++l) {
      const auto w = params.weight(l);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) put_f64(out, w(r, c));
      const auto b = params.bias(l);
      for (Eigen::Index i = 0; i < b.size(); ++i) put_f64(out, b[i]);
    }
  }
  if (!out) throw ContractError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  get_bytes(in, magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw ContractError("checkpoint: bad magic");
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw ContractError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t n_meta = get_u32(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_str(in);
    ckpt.metadata[k] = get_str(in);
  }
  const std::uint32_t n_nets = get_u32(in);
  for (std::uint32_t i = 0; i < n_nets; ++i) {
    std::string name = get_str(in);
    MlpSpec spec;
    const std::uint32_t n_sizes = get_u32(in);
    if (n_sizes < 2 || n_sizes > 1024) throw ContractError("checkpoint: bad layer count for '" + name + "'");
    for (std::uint32_t j = 0; j < n_sizes; ++j) {
      const std::uint32_t s = get_u32(in);
      if (s == 0 || s > (1u << 20)) throw ContractError("checkpoint: bad layer size for '" + name + "'");
      spec.layer_sizes.push_back(static_cast<int>(s));
    }
    for (std::uint32_t j = 0; j + 1 < n_sizes; ++j) {
      char c = 0;
      get_bytes(in, &c, 1);
      spec.activations.push_back(activation_of_code(static_cast<std::uint8_t>(c)));
    }
    MlpParams params(spec);
    for (int l = 0; l < spec.num_layers(); ++l) {
      auto w = params.weight(l);
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = get_f64(in);
      auto b = params.bias(l);
      for (Eigen::Index j = 0; j < b.size(); ++j) b[j] = get_f64(in);
    }
    ckpt.nets.emplace_back(std::move(name), std::move(params));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ContractError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("checkpoint: cannot open '" + tmp + "' for writing");
    write_checkpoint(out, ckpt);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ContractError("checkpoint: cannot move '" + tmp + "' into place");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("checkpoint: cannot open '" + path + "'");
  return read_checkpoint(in);
}

std::string format_double(double x) {
  // Shortest text that reads back to the same bits.
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string format_vector(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

Vector parse_vector(const std::string& text) {
  std::istringstream is(text);
  std::vector<double> xs;
  std::string tok;
  while (is >> tok) xs.push_back(parse_double("vector", tok));
  Vector v(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) v[static_cast<Eigen::Index>(i)] = xs[i];
  return v;
}

Checkpoint agent_checkpoint(const Agent& agent, const std::string& env_name) {
  Checkpoint ckpt;
  auto& m = ckpt.metadata;
  m["env"] = env_name;
  m["state_dim"] = std::to_string(agent.critic.state_dim);
  m["action_dim"] = std::to_string(agent.policy.action_dim);
  m["policy.log_std_min"] = format_double(agent.policy.log_std_min);
  m["policy.log_std_max"] = format_double(agent.policy.log_std_max);
  m["critic.equilibrium"] = format_vector(agent.critic.equilibrium);
  m["critic.error_mask"] = format_vector(agent.critic.error_mask);
  m["critic.eps"] = format_double(agent.critic.eps);
  m["lambda_l"] = format_double(agent.multipliers.lambda_l);
  m["lambda_e"] = format_double(agent.multipliers.lambda_e);
  m["lambda"] = format_double(agent.multipliers.lambda);
  m["k"] = format_double(agent.multipliers.k);
  ckpt.nets.emplace_back("policy", agent.policy.net);
  ckpt.nets.emplace_back("critic", agent.critic.net);
  ckpt.nets.emplace_back("target_policy", agent.targets.policy.net);
  ckpt.nets.emplace_back("target_critic", agent.targets.critic.net);
  return ckpt;
}

Agent agent_from_checkpoint(const Checkpoint& ckpt) {
  auto num = [&](const std::string& key) { return parse_double(key, ckpt.meta(key)); };
  Agent agent;
  const int state_dim = static_cast<int>(num("state_dim"));
  const int action_dim = static_cast<int>(num("action_dim"));

  auto policy_of = [&](const MlpParams& net) {
    GaussianPolicy p;
    p.net = net;
    p.action_dim = action_dim;
    p.log_std_min = num("policy.log_std_min");
    p.log_std_max = num("policy.log_std_max");
    require(net.spec().input_dim() == state_dim && net.spec().output_dim() == 2 * action_dim,
            "checkpoint: policy network shape does not match its metadata");
    return p;
  };
  auto critic_of = [&](const MlpParams& net) {
    LyapunovCritic c;
    c.net = net;
    c.state_dim = state_dim;
    c.action_dim = action_dim;
    c.equilibrium = parse_vector(ckpt.meta("critic.equilibrium"));
    c.error_mask = parse_vector(ckpt.meta("critic.error_mask"));
    c.eps = num("critic.eps");
    require(net.spec().input_dim() == state_dim + action_dim,
            "checkpoint: critic network shape does not match its metadata");
    require(c.equilibrium.size() == state_dim && c.error_mask.size() == state_dim,
            "checkpoint: critic equilibrium/mask size mismatch");
    return c;
  };

  agent.policy = policy_of(ckpt.net("policy"));
  agent.critic = critic_of(ckpt.net("critic"));
  agent.targets.policy = ckpt.has_net("target_policy") ? policy_of(ckpt.net("target_policy")) : agent.policy;
  agent.targets.critic = ckpt.has_net("target_critic") ? critic_of(ckpt.net("target_critic")) : agent.critic;
  agent.multipliers.lambda_l = num("lambda_l");
  agent.multipliers.lambda_e = num("lambda_e");
  agent.multipliers.lambda = num("lambda");
  agent.multipliers.k = num("k");
  return agent;
}

void check_compatible(const Checkpoint& ckpt, const Env& env) {
  const auto& spec = env.spec();
  const std::string sd = ckpt.meta("state_dim");
  const std::string ad = ckpt.meta("action_dim");
  if (sd != std::to_string(spec.state_dim) || ad != std::to_string(spec.action_dim))
    throw ContractError("checkpoint dims (state " + sd + ", action " + ad + ") do not match env '" + spec.name +
                        "' (state " + std::to_string(spec.state_dim) + ", action " +
                        std::to_string(spec.action_dim) + ")");
}

}  // namespace alac
