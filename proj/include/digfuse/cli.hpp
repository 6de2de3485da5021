#pragma once
// Subcommand entry points, callable as library functions so tests can drive
// the exact code paths the binary runs. Each returns a process exit status:
//   0 success, 2 config error, 3 input error, 4 divergence,
//   5 validation-check failure.
#include <string>
#include <vector>

namespace digfuse {

int cmd_fuse(const std::vector<std::string>& args);
int cmd_dig_trace(const std::vector<std::string>& args);
int cmd_metrics(const std::vector<std::string>& args);
int cmd_validate_theory(const std::vector<std::string>& args);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitCheckFailed = 5;

}  // namespace digfuse
