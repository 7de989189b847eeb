#include "reef/filtering.hpp"

#include <cmath>

#include "reef/diffmodel.hpp"

namespace reef::filter {

void FilterConfig::validate() const {
  if (!(cvss_threshold >= 0.0 && cvss_threshold <= 10.0))
    throw ConfigError("filter.cvss_threshold must lie in [0, 10]");
  if (!(fix_score_threshold > 0.0 && fix_score_threshold <= 1.0))
    throw ConfigError("filter.fix_score_threshold must lie in (0, 1]");
  if (!(focus_penalty >= 0.0) || !std::isfinite(focus_penalty))
    throw ConfigError("filter.focus_penalty must be >= 0");
  if (commit_cap < 1) throw ConfigError("filter.commit_cap must be >= 1");
}

std::string_view reason_code(Reason r) noexcept {
  switch (r) {
    case Reason::CvssMissing: return "cvss_missing";
    case Reason::CvssBelowThreshold: return "cvss_below_threshold";
    case Reason::NoFixCommits: return "no_fix_commits";
    case Reason::FixScoreBelowThreshold: return "fix_score_below_threshold";
    case Reason::NoSourceFiles: return "no_source_files";
  }
  return "unknown";
}

FixScoreReport fix_score(std::span<const CommitSummary> commits, const FilterConfig& config) {
  if (commits.empty()) throw NoFixCommits();
  FixScoreReport r;
  double sum = 0.0;
  for (const auto& c : commits) {
    if (c.files_changed < 1) throw Error("commit " + c.sha + " changes no files");
    double w = 1.0 / (1.0 + config.focus_penalty * static_cast<double>(c.files_changed - 1));
    r.per_commit.push_back({c.sha, c.files_changed, w});
    sum += w;
  }
  auto n = commits.size();
  r.commit_count_factor = n <= config.commit_cap ? 1.0 : static_cast<double>(config.commit_cap) / static_cast<double>(n);
  r.score = r.commit_count_factor * (sum / static_cast<double>(n));
  r.pass = r.score >= config.fix_score_threshold;
  if (!r.pass) r.reasons.push_back(Reason::FixScoreBelowThreshold);
  return r;
}

FilterDecision passes_filters(const ingest::AdvisoryRecord& advisory, std::span<const ingest::CommitPatch> commits,
                              const FilterConfig& config) {
  FilterDecision d;
  d.cve_id = advisory.cve_id;
  if (!advisory.cvss) d.reasons.push_back(Reason::CvssMissing);
  else if (advisory.cvss->score < config.cvss_threshold) d.reasons.push_back(Reason::CvssBelowThreshold);

  // Commits without any changed file carry no fix and do not enter the score.
  std::vector<CommitSummary> summaries;
  bool has_source = false;
  for (const auto& c : commits) {
    if (c.files.empty()) continue;
    summaries.push_back({c.ref.sha, c.files.size()});
    std::vector<std::string> paths;
    for (const auto& f : c.files) paths.push_back(f.path);
    for (const auto& f : c.files)
      if (is_recognized(diff::detect_language(f.path, paths))) has_source = true;
  }
  if (summaries.empty()) {
    d.reasons.push_back(Reason::NoFixCommits);
  } else {
    d.report = fix_score(summaries, config);
    for (auto r : d.report->reasons) d.reasons.push_back(r);
    if (!has_source) d.reasons.push_back(Reason::NoSourceFiles);
  }
  d.pass = d.reasons.empty();
  return d;
}

nlohmann::ordered_json to_json(const FilterDecision& d) {
  nlohmann::ordered_json j;
  j["cve_id"] = d.cve_id;
  j["verdict"] = d.pass ? "pass" : "reject";
  j["reasons"] = nlohmann::ordered_json::array();
  for (auto r : d.reasons) j["reasons"].push_back(std::string(reason_code(r)));
  if (d.report) {
    nlohmann::ordered_json rep;
    rep["score"] = d.report->score;
    rep["commit_count_factor"] = d.report->commit_count_factor;
    rep["per_commit"] = nlohmann::ordered_json::array();
    for (const auto& c : d.report->per_commit)
      rep["per_commit"].push_back({{"sha", c.sha}, {"files_changed", c.files_changed}, {"weight", c.weight}});
    j["fix_score"] = std::move(rep);
  } else {
    j["fix_score"] = nullptr;
  }
  return j;
}

}  // namespace reef::filter
