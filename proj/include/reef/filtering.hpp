#pragma once

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reef/ingest.hpp"

namespace reef::filter {

struct FilterConfig {
  double cvss_threshold = 4.0;       // Low/Medium boundary
  double fix_score_threshold = 0.4;  // (0, 1]
  double focus_penalty = 0.25;       // >= 0
  std::size_t commit_cap = 5;        // >= 1

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct CommitSummary {
  std::string sha;
  std::size_t files_changed = 1;
};

struct CommitWeight {
  std::string sha;
  std::size_t files_changed = 0;
  double weight = 0.0;
};

enum class Reason {
  CvssMissing,
  CvssBelowThreshold,
  NoFixCommits,
  FixScoreBelowThreshold,
  NoSourceFiles,
};

std::string_view reason_code(Reason r) noexcept;

struct FixScoreReport {
  std::vector<CommitWeight> per_commit;
  double commit_count_factor = 1.0;
  double score = 0.0;
  bool pass = false;
  std::vector<Reason> reasons;
};

class NoFixCommits : public Error {
 public:
  NoFixCommits() : Error("fix score needs at least one commit") {}
};

// score = g(n) * mean(w), w(c) = 1 / (1 + penalty * (files(c) - 1)),
// g(n) = 1 for n <= cap, cap / n beyond it.
FixScoreReport fix_score(std::span<const CommitSummary> commits, const FilterConfig& config);

struct FilterDecision {
  std::string cve_id;
  bool pass = false;
  std::vector<Reason> reasons;
  std::optional<FixScoreReport> report;
};

// pass iff cvss >= threshold, fix score >= threshold, and at least one changed
// file is in a recognized source language.
FilterDecision passes_filters(const ingest::AdvisoryRecord& advisory, std::span<const ingest::CommitPatch> commits,
                              const FilterConfig& config);

nlohmann::ordered_json to_json(const FilterDecision& d);

}  // namespace reef::filter
