#pragma once

// Command-line driver: synth, run and compare subcommands. The entry point is
// a library function so tests can drive it in-process.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pt/metrics.hpp"

namespace pt::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

struct RunConfig {
  std::filesystem::path data;
  std::string strategy = "pt";
  std::filesystem::path out;
  std::uint64_t seed = 0;
  double cost = 0.0002;
  std::optional<int> first_test_year;  // default: third calendar year of the data
  std::optional<std::size_t> t2v_k;    // pins the space's t2v_k candidates
  std::size_t window = 20;
  std::filesystem::path space;  // empty: built-in space
  std::optional<std::size_t> budget;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  std::size_t jobs = 1;
  std::size_t mv_lookback = 50;
  bool search_once = false;
  bool force = false;
};

// Runs the CLI; returns the process exit code. Diagnostics go to `err`,
// progress to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// 64-bit FNV-1a over the file's bytes, as 16 lowercase hex digits.
std::string file_checksum(const std::filesystem::path& path);

struct ComparisonRow {
  std::string strategy;
  MetricsReport metrics;
};

// flags[row][metric]: the row holds the best value of that metric (maximum,
// except vol and mdd where lower is better). Ties flag every tied row.
std::vector<std::vector<bool>> best_flags(const std::vector<ComparisonRow>& rows);
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);
// Fixed-width table; best values carry a trailing '*'.
std::string render_comparison(const std::vector<ComparisonRow>& rows);

}  // namespace pt::cli
