#pragma once

#include <json.hpp>

#include <map>
#include <span>
#include <string>
#include <vector>

#include "reef/dataset.hpp"

namespace reef::analytics {

using dataset::DatasetItem;
using dataset::ItemMetrics;

// One CVE as seen by the statistics: its items folded together.
struct Case {
  std::string cve_id;
  Language language = Language::Unknown;
  std::size_t diff_files = 0;
  std::size_t function_units = 0;
  std::size_t changed_loc = 0;
  std::string origin_message;
  std::string llm_message;
  std::vector<std::string> changed_paths;
};

// Groups items by cve_id. `metrics` may be empty, in which case diff metrics
// are zero; otherwise it must be parallel to `items` by index.
std::vector<Case> build_cases(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics);

// Plurality vote over the case's file languages; ties go to the earlier
// language in canonical table order.
Language attribute_language(std::span<const Language> file_languages);

struct StatsRow {
  std::string language;
  std::size_t case_count = 0;
  std::size_t func_count = 0;
  double avg_diff_files = 0.0;
  double avg_patch = 0.0;
  double avg_col = 0.0;
};

struct StatsTable {
  std::vector<StatsRow> rows;  // canonical language order, languages with cases only
  StatsRow total;
};

// Counts sum; averages are the unweighted mean of the row averages.
StatsRow aggregate_total(std::span<const StatsRow> rows);
StatsTable per_language_stats(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics);

struct CweCoverage {
  std::size_t overall = 0;
  std::map<std::string, std::size_t> per_language;
};

CweCoverage cwe_coverage(std::span<const DatasetItem> items);

struct CweRank {
  std::string cwe;
  std::size_t case_count = 0;
  double proportion = 0.0;

  bool operator==(const CweRank&) const = default;
};

std::vector<CweRank> top_k_cwe(std::span<const DatasetItem> items, std::size_t k);

struct LowQualityRules {
  std::size_t min_length = 20;
  std::vector<std::string> autofill_prefixes = {"Merge pull request", "Merge branch"};
  // Exactly "<verb> <basename>" of a changed file.
  std::vector<std::string> autofill_verbs = {"Update", "Create", "Delete"};
};

bool is_low_quality(std::string_view message, std::span<const std::string> changed_paths,
                    const LowQualityRules& rules = {});

struct MessageStatsRow {
  std::string language;
  std::size_t case_count = 0;
  std::size_t lcmsg_count = 0;
  double avg_original = 0.0;
  double median_original = 0.0;
  double avg_generated = 0.0;
  double median_generated = 0.0;
};

struct MessageStatsTable {
  std::vector<MessageStatsRow> rows;
  MessageStatsRow total;
};

MessageStatsRow aggregate_total(std::span<const MessageStatsRow> rows);
// Lower-middle element for even counts.
double lower_median(std::vector<double> values);
MessageStatsTable message_stats(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics,
                                const LowQualityRules& rules = {});

// --- findings --------------------------------------------------------------------

struct Finding {
  std::string path;
  std::size_t start_line = 0;
  std::size_t end_line = 0;
  std::string rule_id;
};

struct FindingsReport {
  std::vector<Finding> findings;
};

// Semgrep-style `{"results": [...]}` or SARIF 2.1.0 `{"runs": [...]}`.
FindingsReport parse_findings(const nlohmann::json& doc);
FindingsReport load_findings(const std::string& path);

struct DetectionReport {
  std::size_t total_items = 0;
  std::size_t detected_items = 0;
  double overall = 0.0;
  std::map<std::string, double> per_language;
  std::size_t total_cves = 0;
  std::size_t detected_cves = 0;
  double per_cve = 0.0;
  std::size_t unresolved_findings = 0;    // path matched no item
  std::size_t non_overlapping_findings = 0;  // path matched, no location overlapped
};

// An item is detected when a finding on its file shares at least one line
// with one of its old-file locations.
DetectionReport detection_rate(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics,
                               const FindingsReport& findings);

// --- rendering -----------------------------------------------------------------------

std::string render_text(const StatsTable& t);
std::string render_text(const MessageStatsTable& t);
std::string render_text(std::span<const CweRank> ranks);
nlohmann::ordered_json to_json(const StatsTable& t);
nlohmann::ordered_json to_json(const MessageStatsTable& t);
nlohmann::ordered_json to_json(std::span<const CweRank> ranks);
nlohmann::ordered_json to_json(const CweCoverage& c);
nlohmann::ordered_json to_json(const DetectionReport& d);

}  // namespace reef::analytics
