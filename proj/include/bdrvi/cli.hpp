#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bdrvi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kVersion = "0.1.0";

/// Runs one subcommand. `args` excludes the program name.
/// Every successful run writes manifest.json into its output directory.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace bdrvi::cli
