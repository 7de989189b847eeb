#include "reef/analytics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

namespace reef::analytics {

using ojson = nlohmann::ordered_json;

namespace {

std::size_t language_rank(Language l) {
  auto it = std::find(kRecognizedLanguages.begin(), kRecognizedLanguages.end(), l);
  return static_cast<std::size_t>(it - kRecognizedLanguages.begin());
}

Language item_language(const DatasetItem& it) { return language_from_name(it.language).value_or(Language::Unknown); }

std::vector<const DatasetItem*> by_index(std::span<const DatasetItem> items) {
  std::vector<const DatasetItem*> out;
  for (const auto& it : items) out.push_back(&it);
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->index < b->index; });
  return out;
}

double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string basename(std::string_view path) {
  auto slash = path.find_last_of('/');
  return std::string(slash == std::string_view::npos ? path : path.substr(slash + 1));
}

std::string normalize_path(std::string p) {
  if (p.rfind("file://", 0) == 0) p.erase(0, 7);
  while (p.rfind("./", 0) == 0) p.erase(0, 2);
  return p;
}

}  // namespace

Language attribute_language(std::span<const Language> file_languages) {
  std::array<std::size_t, kRecognizedLanguages.size()> votes{};
  for (auto l : file_languages)
    if (is_recognized(l)) ++votes[language_rank(l)];
  std::size_t best = 0;
  for (std::size_t k = 1; k < votes.size(); ++k)
    if (votes[k] > votes[best]) best = k;
  return votes[best] == 0 ? Language::Unknown : kRecognizedLanguages[best];
}

std::vector<Case> build_cases(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics) {
  std::map<std::size_t, const ItemMetrics*> metric_of;
  for (const auto& m : metrics) metric_of[m.index] = &m;
  if (!metrics.empty() && metric_of.size() != items.size())
    throw Error("item metrics do not line up with the dataset");

  std::vector<Case> cases;
  std::map<std::string, std::size_t> slot;
  std::map<std::string, std::vector<Language>> langs;
  std::map<std::string, std::set<std::string>> files;
  for (const auto* it : by_index(items)) {
    auto [pos, fresh] = slot.emplace(it->cve_id, cases.size());
    if (fresh) {
      Case c;
      c.cve_id = it->cve_id;
      c.origin_message = it->origin_message;
      c.llm_message = it->llm_message;
      cases.push_back(std::move(c));
    }
    auto& c = cases[pos->second];
    langs[c.cve_id].push_back(item_language(*it));
    if (!metrics.empty()) {
      auto mit = metric_of.find(it->index);
      if (mit == metric_of.end()) throw Error("no metrics for item " + std::to_string(it->index));
      const auto& m = *mit->second;
      c.function_units += m.function_units;
      c.changed_loc += m.changed_loc;
      c.changed_paths.push_back(m.path);
      files[c.cve_id].insert(m.repo + "\n" + m.path);
    } else {
      files[c.cve_id].insert(it->raw_url);
    }
  }
  for (auto& c : cases) {
    c.language = attribute_language(langs[c.cve_id]);
    c.diff_files = files[c.cve_id].size();
  }
  return cases;
}

StatsRow aggregate_total(std::span<const StatsRow> rows) {
  StatsRow t;
  t.language = "Total";
  std::vector<double> diff, patch, col;
  for (const auto& r : rows) {
    t.case_count += r.case_count;
    t.func_count += r.func_count;
    diff.push_back(r.avg_diff_files);
    patch.push_back(r.avg_patch);
    col.push_back(r.avg_col);
  }
  t.avg_diff_files = mean(diff);
  t.avg_patch = mean(patch);
  t.avg_col = mean(col);
  return t;
}

StatsTable per_language_stats(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics) {
  auto cases = build_cases(items, metrics);
  StatsTable t;
  for (auto lang : kRecognizedLanguages) {
    StatsRow r;
    r.language = std::string(language_name(lang));
    std::vector<double> diff, patch, col;
    for (const auto& c : cases) {
      if (c.language != lang) continue;
      ++r.case_count;
      r.func_count += c.function_units;
      diff.push_back(static_cast<double>(c.diff_files));
      patch.push_back(static_cast<double>(c.function_units));
      col.push_back(static_cast<double>(c.changed_loc));
    }
    if (r.case_count == 0) continue;
    r.avg_diff_files = mean(diff);
    r.avg_patch = mean(patch);
    r.avg_col = mean(col);
    t.rows.push_back(std::move(r));
  }
  t.total = aggregate_total(t.rows);
  return t;
}

CweCoverage cwe_coverage(std::span<const DatasetItem> items) {
  std::set<std::string> all;
  std::map<std::string, std::set<std::string>> per;
  for (const auto& it : items)
    for (const auto& c : it.cwes)
      if (is_countable_cwe(c)) {
        all.insert(c);
        per[it.language].insert(c);
      }
  CweCoverage out;
  out.overall = all.size();
  for (const auto& [lang, set] : per) out.per_language[lang] = set.size();
  return out;
}

std::vector<CweRank> top_k_cwe(std::span<const DatasetItem> items, std::size_t k) {
  if (k < 1) throw Error("top_k_cwe needs k >= 1");
  std::set<std::string> cases;
  std::map<std::string, std::set<std::string>> cves_of;
  for (const auto& it : items) {
    cases.insert(it.cve_id);
    for (const auto& c : it.cwes)
      if (is_countable_cwe(c)) cves_of[c].insert(it.cve_id);
  }
  std::vector<CweRank> ranks;
  for (const auto& [cwe, cves] : cves_of)
    ranks.push_back({cwe, cves.size(), static_cast<double>(cves.size()) / static_cast<double>(cases.size())});
  std::sort(ranks.begin(), ranks.end(), [](const CweRank& a, const CweRank& b) {
    if (a.case_count != b.case_count) return a.case_count > b.case_count;
    return *cwe_number(a.cwe) < *cwe_number(b.cwe);
  });
  if (ranks.size() > k) ranks.resize(k);
  return ranks;
}

bool is_low_quality(std::string_view message, std::span<const std::string> changed_paths,
                    const LowQualityRules& rules) {
  auto m = trim(message);
  if (utf8_length(m) < rules.min_length) return true;
  for (const auto& p : rules.autofill_prefixes)
    if (m.substr(0, p.size()) == p) return true;
  for (const auto& verb : rules.autofill_verbs)
    for (const auto& path : changed_paths)
      if (m == verb + " " + basename(path)) return true;
  return false;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  return values[(values.size() - 1) / 2];
}

MessageStatsRow aggregate_total(std::span<const MessageStatsRow> rows) {
  MessageStatsRow t;
  t.language = "Total";
  std::vector<double> ao, mo, ag, mg;
  for (const auto& r : rows) {
    t.case_count += r.case_count;
    t.lcmsg_count += r.lcmsg_count;
    ao.push_back(r.avg_original);
    mo.push_back(r.median_original);
    ag.push_back(r.avg_generated);
    mg.push_back(r.median_generated);
  }
  t.avg_original = mean(ao);
  t.median_original = mean(mo);
  t.avg_generated = mean(ag);
  t.median_generated = mean(mg);
  return t;
}

MessageStatsTable message_stats(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics,
                                const LowQualityRules& rules) {
  auto cases = build_cases(items, metrics);
  MessageStatsTable t;
  for (auto lang : kRecognizedLanguages) {
    MessageStatsRow r;
    r.language = std::string(language_name(lang));
    std::vector<double> orig, gen;
    for (const auto& c : cases) {
      if (c.language != lang) continue;
      ++r.case_count;
      if (is_low_quality(c.origin_message, c.changed_paths, rules)) ++r.lcmsg_count;
      orig.push_back(static_cast<double>(utf8_length(c.origin_message)));
      gen.push_back(static_cast<double>(utf8_length(c.llm_message)));
    }
    if (r.case_count == 0) continue;
    r.avg_original = mean(orig);
    r.median_original = lower_median(orig);
    r.avg_generated = mean(gen);
    r.median_generated = lower_median(gen);
    t.rows.push_back(std::move(r));
  }
  t.total = aggregate_total(t.rows);
  return t;
}

// --- findings ---------------------------------------------------------------------

FindingsReport parse_findings(const nlohmann::json& doc) {
  FindingsReport r;
  try {
    if (doc.contains("runs")) {
      for (const auto& run : doc.at("runs"))
        for (const auto& res : run.value("results", nlohmann::json::array())) {
          std::string rule = res.value("ruleId", std::string{});
          for (const auto& loc : res.value("locations", nlohmann::json::array())) {
            const auto& phys = loc.at("physicalLocation");
            Finding f;
            f.rule_id = rule;
            f.path = normalize_path(phys.at("artifactLocation").at("uri").get<std::string>());
            const auto& region = phys.at("region");
            f.start_line = region.at("startLine").get<std::size_t>();
            f.end_line = region.value("endLine", f.start_line);
            r.findings.push_back(std::move(f));
          }
        }
    } else if (doc.contains("results")) {
      for (const auto& res : doc.at("results")) {
        Finding f;
        f.rule_id = res.value("check_id", std::string{});
        f.path = normalize_path(res.at("path").get<std::string>());
        f.start_line = res.at("start").at("line").get<std::size_t>();
        f.end_line = res.contains("end") ? res.at("end").at("line").get<std::size_t>() : f.start_line;
        r.findings.push_back(std::move(f));
      }
    } else {
      throw ParseError("findings document has neither 'runs' (SARIF) nor 'results'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed findings report: ") + e.what());
  }
  for (auto& f : r.findings)
    if (f.end_line < f.start_line) std::swap(f.start_line, f.end_line);
  return r;
}

FindingsReport load_findings(const std::string& path) {
  try {
    return parse_findings(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

DetectionReport detection_rate(std::span<const DatasetItem> items, std::span<const ItemMetrics> metrics,
                               const FindingsReport& findings) {
  std::map<std::size_t, const ItemMetrics*> metric_of;
  for (const auto& m : metrics) metric_of[m.index] = &m;

  DetectionReport r;
  std::vector<bool> resolved(findings.findings.size(), false), used(findings.findings.size(), false);
  std::map<std::string, std::pair<std::size_t, std::size_t>> lang_counts;  // detected, total
  std::map<std::string, bool> cve_detected;
  for (const auto& it : items) {
    ++r.total_items;
    auto& lc = lang_counts[it.language];
    ++lc.second;
    cve_detected.try_emplace(it.cve_id, false);
    auto mit = metric_of.find(it.index);
    if (mit == metric_of.end()) continue;
    const auto& m = *mit->second;
    bool hit = false;
    for (std::size_t k = 0; k < findings.findings.size(); ++k) {
      const auto& f = findings.findings[k];
      if (f.path != m.path && f.path != m.repo + "/" + m.path) continue;
      resolved[k] = true;
      for (auto [start, length] : m.locations) {
        std::size_t end = length == 0 ? start : start + length - 1;
        if (f.start_line <= end && start <= f.end_line) {
          hit = true;
          used[k] = true;
        }
      }
    }
    if (hit) {
      ++r.detected_items;
      ++lc.first;
      cve_detected[it.cve_id] = true;
    }
  }
  for (std::size_t k = 0; k < findings.findings.size(); ++k) {
    if (!resolved[k]) ++r.unresolved_findings;
    else if (!used[k]) ++r.non_overlapping_findings;
  }
  r.overall = r.total_items ? static_cast<double>(r.detected_items) / static_cast<double>(r.total_items) : 0.0;
  for (const auto& [lang, c] : lang_counts)
    r.per_language[lang] = c.second ? static_cast<double>(c.first) / static_cast<double>(c.second) : 0.0;
  r.total_cves = cve_detected.size();
  for (const auto& [id, d] : cve_detected) r.detected_cves += d ? 1 : 0;
  r.per_cve = r.total_cves ? static_cast<double>(r.detected_cves) / static_cast<double>(r.total_cves) : 0.0;
  return r;
}

// --- rendering -----------------------------------------------------------------------

namespace {

std::string line(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

}  // namespace

std::string render_text(const StatsTable& t) {
  std::string out = line("%-10s %8s %8s %16s %12s %10s\n", "Language", "# Case", "# Func", "# Avg diff file",
                         "# Avg patch", "# Avg COL");
  auto row = [&](const StatsRow& r) {
    out += line("%-10s %8zu %8zu %16.2f %12.2f %10.2f\n", r.language.c_str(), r.case_count, r.func_count,
                r.avg_diff_files, r.avg_patch, r.avg_col);
  };
  for (const auto& r : t.rows) row(r);
  row(t.total);
  out += "(function units are approximate: signature matching with hunk-count fallback)\n";
  return out;
}

std::string render_text(const MessageStatsTable& t) {
  std::string out = line("%-10s %8s %8s %20s %20s\n", "Language", "# Case", "# Lcmsg", "Acmsg (Med.)",
                         "Agmsg (Med.)");
  auto row = [&](const MessageStatsRow& r) {
    out += line("%-10s %8zu %8zu %11.2f (%6.2f) %11.2f (%6.2f)\n", r.language.c_str(), r.case_count, r.lcmsg_count,
                r.avg_original, r.median_original, r.avg_generated, r.median_generated);
  };
  for (const auto& r : t.rows) row(r);
  row(t.total);
  return out;
}

std::string render_text(std::span<const CweRank> ranks) {
  std::string out = line("%-4s %-10s %8s %10s\n", "Rank", "CWE", "# Case", "Share");
  for (std::size_t k = 0; k < ranks.size(); ++k)
    out += line("%-4zu %-10s %8zu %9.2f%%\n", k + 1, ranks[k].cwe.c_str(), ranks[k].case_count,
                ranks[k].proportion * 100.0);
  return out;
}

ojson to_json(const StatsTable& t) {
  auto row = [](const StatsRow& r) {
    return ojson{{"language", r.language},           {"case_count", r.case_count}, {"func_count", r.func_count},
                 {"avg_diff_files", r.avg_diff_files}, {"avg_patch", r.avg_patch},   {"avg_col", r.avg_col}};
  };
  ojson j;
  j["rows"] = ojson::array();
  for (const auto& r : t.rows) j["rows"].push_back(row(r));
  j["total"] = row(t.total);
  j["func_count_method"] = "approximate";
  return j;
}

ojson to_json(const MessageStatsTable& t) {
  auto row = [](const MessageStatsRow& r) {
    return ojson{{"language", r.language},
                 {"case_count", r.case_count},
                 {"lcmsg_count", r.lcmsg_count},
                 {"avg_original", r.avg_original},
                 {"median_original", r.median_original},
                 {"avg_generated", r.avg_generated},
                 {"median_generated", r.median_generated}};
  };
  ojson j;
  j["rows"] = ojson::array();
  for (const auto& r : t.rows) j["rows"].push_back(row(r));
  j["total"] = row(t.total);
  return j;
}

ojson to_json(std::span<const CweRank> ranks) {
  ojson j = ojson::array();
  for (const auto& r : ranks) j.push_back({{"cwe", r.cwe}, {"case_count", r.case_count}, {"proportion", r.proportion}});
  return j;
}

ojson to_json(const CweCoverage& c) {
  ojson j;
  j["overall"] = c.overall;
  j["per_language"] = ojson::object();
  for (const auto& [lang, n] : c.per_language) j["per_language"][lang] = n;
  return j;
}

ojson to_json(const DetectionReport& d) {
  ojson j;
  j["total_items"] = d.total_items;
  j["detected_items"] = d.detected_items;
  j["overall"] = d.overall;
  j["per_language"] = ojson::object();
  for (const auto& [lang, v] : d.per_language) j["per_language"][lang] = v;
  j["total_cves"] = d.total_cves;
  j["detected_cves"] = d.detected_cves;
  j["per_cve"] = d.per_cve;
  j["unresolved_findings"] = d.unresolved_findings;
  j["non_overlapping_findings"] = d.non_overlapping_findings;
  return j;
}

}  // namespace reef::analytics
