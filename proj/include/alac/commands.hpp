#pragma once

// Subcommands behind the command-line tool. Each writes its artifacts and a
// manifest.json under the configured output directory and returns an exit
// status.

#include "alac/config.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

namespace alac {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitRuntime = 3,
  kExitBoundViolated = 4,
};

const char* version_string();
std::uint64_t fnv1a64(std::string_view bytes);

int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);
int cmd_robustness(const RunConfig& cfg, std::ostream& log);
/// `check` is one of lemma2, thm3, thm4, bound.
int cmd_verify(const RunConfig& cfg, const std::string& check, std::ostream& log);

/// Runs a subcommand and maps exceptions to exit codes: configuration and
/// contract errors give 2, numerical and invariant failures 3.
int run_command(const std::function<int()>& body, std::ostream& err);

/// Calls fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace alac
