#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "alfa/llm.hpp"
#include "alfa/util.hpp"

namespace alfa::pipeline {

enum class Stage {
  ingest,
  parse,
  sample,
  synthesize,
  judge_filter,
  export_,
  fuse_weights,
  simulate,
  winrate,
  stats,
  annotate_serve,
  report,
};

inline constexpr std::array<Stage, 12> kStages = {
    Stage::ingest,   Stage::parse,        Stage::sample,   Stage::synthesize,
    Stage::judge_filter, Stage::export_,  Stage::fuse_weights, Stage::simulate,
    Stage::winrate,  Stage::stats,        Stage::annotate_serve, Stage::report,
};

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

// One JSON file per run. Relative paths resolve against the file's directory.
//   run_id, run_dir, cache_dir (default <run_dir>/cache), seed, workers,
//   endpoints: [EndpointConfig...], and one object per stage name.
struct RunConfig {
  json raw;
  std::filesystem::path base_dir;
  std::string run_id;
  std::filesystem::path run_dir;
  std::filesystem::path cache_dir;
  std::uint64_t seed = 0;
  std::size_t workers = 4;
  std::vector<llm::EndpointConfig> endpoints;

  static RunConfig parse(const json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  // Stage section, empty object when absent.
  json section(Stage s) const;
  std::filesystem::path resolve(const std::string& p) const;
  std::string digest() const;
  std::unique_ptr<llm::Gateway> make_gateway() const;
};

struct FileDigest {
  std::string name;  // path relative to the run directory when inside it
  std::string sha256;

  json to_json() const;
  static FileDigest from_json(const json& j);
};

struct RunManifest {
  std::string run_id;
  Stage stage = Stage::ingest;
  std::string status;  // running | success | failed
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;  // only filled on success
  json endpoints = json::array();
  std::string config_digest;
  std::string started_at;
  std::string finished_at;
  json details = json::object();
  std::string error;

  json to_json() const;
  static RunManifest from_json(const json& j);
  static std::filesystem::path path_for(const std::filesystem::path& run_dir, Stage s);
  static std::optional<RunManifest> load(const std::filesystem::path& run_dir, Stage s);
  void save(const std::filesystem::path& run_dir) const;
};

struct StageOptions {
  bool dry_run = false;
  std::ostream* log = nullptr;
};

enum ExitCode { kSuccess = 0, kStageFailure = 1, kConfigError = 2 };

// Runs one stage under an exclusive lock on the run directory and writes its
// manifest. Upstream artifacts are checked against the digests their stage
// recorded. Returns the process exit code; never throws.
int run_stage(const RunConfig& cfg, Stage stage, const StageOptions& opts = {});

// Planned LLM calls of a stage, as far as upstream artifacts allow counting.
json plan_stage(const RunConfig& cfg, Stage stage);

struct Report {
  json data;
  std::string text;
};

// Tables from the manifests of the given run directories: win-rate and
// simulator accuracy per run, retention per attribute, agreement statistics.
Report build_report(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace alfa::pipeline
