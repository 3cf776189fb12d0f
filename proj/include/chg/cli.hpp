#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace chg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNumericError = 2;

// Entry point of the `chg` tool. args excludes the program name.
// Subcommands: value, select, oracle, bench, removal.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chg
