#pragma once

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reef/analytics.hpp"
#include "reef/enrich.hpp"
#include "reef/filtering.hpp"
#include "reef/http.hpp"
#include "reef/ingest.hpp"

namespace reef::pipeline {

struct SourceConfig {
  std::string id;
  std::string kind;  // "fixture" or "nvd"
  std::string path;  // fixture
  std::string url;   // nvd
  std::size_t page_size = 100;
};

struct ProviderConfig {
  std::string id = "canned";  // "canned" or "chat"
  std::string canned_dir;
  std::string endpoint;
  std::string model;
};

struct FetchConfig {
  std::size_t workers = 4;
  double rate_per_second = 1.0;
  double burst = 5.0;
  int max_attempts = 4;
  int backoff_ms = 500;
  std::vector<std::string> fixtures;  // read-only cache layers
  ingest::HostingService hosting;
};

struct AnalyticsConfig {
  std::size_t top_k = 15;
  std::string findings;
  analytics::LowQualityRules low_quality;
};

struct EvalConfig {
  std::string criteria_ratings;
  std::string human_ratings;
};

struct PipelineConfig {
  std::vector<SourceConfig> sources;
  int since_year = 2016;
  filter::FilterConfig filter;
  enrich::EnrichConfig enrich;
  std::string exemplars;
  std::string templates;
  ProviderConfig provider;
  FetchConfig fetch;
  AnalyticsConfig analytics;
  EvalConfig eval;
  std::string cache_dir;  // defaults to <output_dir>/cache
  std::string output_dir = "out";
  bool offline = false;

  // Unknown keys and out-of-range values are ConfigErrors. Relative paths
  // resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
  void validate() const;
};

enum class Stage { Collect, Filter, Enrich, Analyze, Eval, Validate, Export };

std::string_view stage_name(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view name) noexcept;

enum ExitCode : int { kOk = 0, kUsage = 1, kDependency = 2, kRuntime = 3 };

class DependencyError : public Error {
 public:
  DependencyError(const std::string& missing, Stage run_first)
      : Error("missing " + missing + "; run `reef " + std::string(stage_name(run_first)) + "` first") {}
};

// Process-level inputs a stage may touch; injectable for tests.
struct Environment {
  std::function<std::optional<std::string>(const std::string&)> getenv;
  http::Transport* transport = nullptr;  // used when online; offline always uses the guard
  http::NetworkGuard* guard = nullptr;   // offline guard; a private one if null

  static Environment process();
};

struct StageOptions {
  std::optional<std::string> filter_report;
};

struct StageResult {
  int exit_code = kOk;
  nlohmann::ordered_json report;
  std::vector<std::string> errors;
};

// Runs one stage, mapping failures onto exit codes. Never throws reef::Error.
StageResult run_stage(Stage stage, const PipelineConfig& config, Environment& env, const StageOptions& options = {});

// File names inside output_dir.
namespace files {
inline constexpr const char* kCollected = "collected.jsonl";
inline constexpr const char* kFiltered = "filtered.jsonl";
inline constexpr const char* kDecisions = "filter_decisions.jsonl";
inline constexpr const char* kExplanations = "explanations.jsonl";
inline constexpr const char* kDataset = "dataset.jsonl";
inline constexpr const char* kMetrics = "item_metrics.jsonl";
inline constexpr const char* kCveMetadata = "cve_metadata.jsonl";
inline constexpr const char* kExport = "dataset.json";
inline constexpr const char* kRunMetadata = "run_metadata.json";
inline constexpr const char* kAnalysisDir = "analysis";
}  // namespace files

}  // namespace reef::pipeline
