#pragma once

#include <string>
#include <vector>

namespace dirguide::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitOracle = 2;
inline constexpr int kExitWrite = 3;

/// Parses and runs one invocation; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace dirguide::cli
