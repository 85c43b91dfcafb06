#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace vea::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitInternal = 4;
/// `vea verify` exits with this when a suite fails.
inline constexpr int kExitVerifyFailed = 5;

/// `--key value` overrides applied after the config file is read.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Writes epochs.csv (one row per finished epoch), model.veac and
/// manifest.json into the configured output directory.
int cmd_train(const std::filesystem::path& config_path, const Overrides& overrides, std::ostream& out,
              std::ostream& err);

/// Writes metrics.csv, confusion.csv and eval.json for the test split and
/// prints the macro metrics on one line.
int cmd_eval(const std::filesystem::path& checkpoint_path, const std::filesystem::path& config_path,
             const Overrides& overrides, std::ostream& out, std::ostream& err);

/// Runs the built-in oracle suites and prints one line per suite.
int cmd_verify(std::ostream& out, std::ostream& err);

/// Collects every eval.json under run_dir into report.csv and an aligned table.
int cmd_report(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

/// Git blob hash of a file's bytes; directories hash the sorted list of
/// their files' relative paths and blob hashes.
std::string content_hash(const std::filesystem::path& path);

/// Full command-line entry point.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vea::cli
