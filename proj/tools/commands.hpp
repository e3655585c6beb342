#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cheblap::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // gradcheck mismatch, unexpected errors
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

inline constexpr const char* kCheckpointFile = "checkpoint.txt";
inline constexpr const char* kMetricsFile = "metrics.log";
inline constexpr const char* kRunManifestFile = "run_manifest.txt";

// Parses argv (argv[0] is the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace cheblap::cli
