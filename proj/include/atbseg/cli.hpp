#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace atbseg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

/// Maps an exception to the command-line exit code.
int exit_code_for(const std::exception& e);

/// $ATBSEG_CACHE when set, otherwise ".atbseg-cache" in the working directory.
std::filesystem::path cache_dir();

/// Entry point of the `atbseg` tool: synth | rasterize | grid | adapt | matched | eval | report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace atbseg
