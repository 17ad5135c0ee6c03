#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lfgen::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Runs one subcommand. `args` excludes the program name. Messages go to
/// `out` and diagnostics to `err`; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Flat configuration document: one `key = value` per line, `#` comments,
/// optional double quotes around values. Repeated keys keep every value in
/// order.
std::vector<std::pair<std::string, std::string>> parse_config(const std::string& text);

}  // namespace lfgen::cli
