#pragma once

#include <string>
#include <vector>

namespace titlegen::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitEmptyResult = 3;
inline constexpr int kExitNumericError = 4;

// Entry point behind main(); also called in-process by the tests.
int run(const std::vector<std::string>& args);

}  // namespace titlegen::cli
