#pragma once

#include "confae/cli/config_io.hpp"
#include "confae/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace confae::cli {

namespace fs = std::filesystem;

struct GenerateOptions {
  std::size_t n = 5000;
  std::optional<std::uint64_t> seed;
  fs::path out;
  bool standardize = false;
};

void cmd_generate(const GenerateOptions& opt, std::ostream& log);

struct TrainOptions {
  std::optional<fs::path> config;  // run config or a previous manifest
  std::optional<fs::path> data;
  std::optional<std::size_t> n;
  fs::path out = "run";
  std::vector<std::string> overrides;  // dotted key=value
  std::optional<std::uint64_t> seed;
  std::optional<std::string> regularizer;
  std::optional<double> lambda_geo;
  std::optional<int> probes;
  std::optional<int> epochs;
  bool exact_trace = false;
  bool detach_codes = false;
  bool calibrate_intensity = false;  // dry run: propose lambda_geo and stop
  std::optional<fs::path> resume;
  bool single_thread = false;
  bool quiet = false;
};

struct TrainOutcome {
  ResolvedConfig config;
  std::optional<train::IntensityProposal> proposal;  // set by the dry run
  int epochs_run = 0;
};

TrainOutcome cmd_train(const TrainOptions& opt, std::ostream& log);

enum class Oracle { None, Sphere };

struct DiagnoseOptions {
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> data;
  std::optional<fs::path> out;  // defaults to the checkpoint's directory
  int k = 10;
  std::optional<double> bandwidth;  // empty = auto
  Oracle oracle = Oracle::None;
};

struct DiagnoseOutcome {
  std::size_t points = 0;
  std::optional<geo::KappaSummary> kappa;
  std::optional<double> median_abs_normalized;  // interior nodes
  std::optional<double> median_calibrated;      // interior nodes
  std::size_t interior = 0;
};

DiagnoseOutcome cmd_diagnose(const DiagnoseOptions& opt, std::ostream& log);

struct PlotOptions {
  fs::path diagnostics;
  std::optional<fs::path> out;
};

std::vector<fs::path> cmd_plot(const PlotOptions& opt, std::ostream& log);

struct CompareOptions {
  std::vector<fs::path> runs;  // run directories or kappa_summary.json files
  std::optional<fs::path> out;
};

struct CompareOutcome {
  json table;
  std::optional<bool> ordering;  // unset when globiso or both of conf/lociso are missing
};

CompareOutcome cmd_compare(const CompareOptions& opt, std::ostream& log);

/// Full command-line entry point; returns the process exit code
/// (0 success, 1 validation error, 2 runtime failure).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace confae::cli
