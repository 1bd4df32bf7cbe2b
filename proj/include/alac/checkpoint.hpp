#pragma once

// Binary parameter checkpoints.
//
// Layout (all integers unsigned little-endian, all reals IEEE-754 binary64
// little-endian):
//
//   magic       8 bytes  "ALACCKPT"
//   version     u32      currently 1
//   n_meta      u32
//   n_meta x    { str key, str value }
//   n_nets      u32
//   n_nets x    { str name,
//                 u32 n_sizes, n_sizes x u32 layer size,
//                 (n_sizes - 1) x u8 activation (0 relu, 1 tanh, 2 identity),
//                 per layer: W row-major (out x in) f64, then b f64 }
//
// with str = u32 byte length followed by the bytes. Metadata values that
// hold numbers are written in shortest round-trip form, so every double
// survives the trip.

#include "alac/alac.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace alac {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, MlpParams>> nets;

  const MlpParams& net(const std::string& name) const;
  bool has_net(const std::string& name) const;
  const std::string& meta(const std::string& key) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Online and target networks plus everything needed to rebuild them.
Checkpoint agent_checkpoint(const Agent& agent, const std::string& env_name);
Agent agent_from_checkpoint(const Checkpoint& ckpt);

/// Throws ContractError if the checkpoint's networks do not fit `env`.
void check_compatible(const Checkpoint& ckpt, const Env& env);

std::string format_double(double x);
std::string format_vector(const Vector& v);
Vector parse_vector(const std::string& text);

}  // namespace alac
