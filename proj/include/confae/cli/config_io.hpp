#pragma once

#include "confae/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace confae::cli {

using nlohmann::json;
using linalg::Matrix;
using linalg::Vector;

/// Where a run's samples come from: a CSV file, or a freshly generated
/// Swiss roll of `n` points seeded with the run seed.
struct DataSource {
  std::optional<std::string> path;
  std::size_t n = 5000;
};

struct ResolvedConfig {
  train::RunConfig run;
  DataSource data;
};

json config_to_json(const ResolvedConfig& cfg);

/// Reads every known key, appending one message per unknown key or bad value
/// to `errors`. Missing keys keep their defaults.
ResolvedConfig parse_config(const json& j, std::vector<std::string>& errors);

/// parse_config + RunConfig::validate; throws ConfigError listing every problem.
/// `allow_missing_lambda` accepts a regularizer without an intensity.
ResolvedConfig resolve_config(const json& j, bool allow_missing_lambda = false);

/// Applies "dotted.key=value"; the value is read as JSON when it parses,
/// otherwise as a string.
void apply_override(json& j, std::string_view assignment);

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
void append_file(const std::filesystem::path& path, std::string_view content);
json read_json(const std::filesystem::path& path);
/// Two-space indented with a trailing newline.
void write_json(const std::filesystem::path& path, const json& j);

/// SHA-1 of "blob <size>\0" + content, as git computes object ids.
std::string git_blob_sha1(std::string_view content);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kRunCheckpointVersion = 1;

struct Checkpoint {
  ResolvedConfig config;
  train::TrainState state;
};

json checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const json& j);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace confae::cli
