#include "reef/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include "reef/diffmodel.hpp"

namespace reef::dataset {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

Assembly assemble_items(const ingest::AdvisoryRecord& advisory, std::span<const ingest::CommitPatch> commits,
                        const enrich::ExplanationResult& explanation) {
  if (explanation.cve_id != advisory.cve_id)
    throw Error("explanation for " + explanation.cve_id + " attached to " + advisory.cve_id);
  if (!advisory.cvss) throw Error(advisory.cve_id + " has no CVSS score");
  Assembly out;
  for (const auto& c : commits) {
    std::vector<std::string> paths;
    for (const auto& f : c.files) paths.push_back(f.path);
    std::vector<const ingest::ChangedFile*> files;
    for (const auto& f : c.files) files.push_back(&f);
    std::stable_sort(files.begin(), files.end(), [](auto* a, auto* b) { return a->path < b->path; });
    for (const auto* f : files) {
      auto lang = diff::detect_language(f->path, paths);
      if (!is_recognized(lang)) {
        ++out.skipped_unrecognized;
        continue;
      }
      DatasetItem item;
      item.language = std::string(language_name(lang));
      item.cve_id = advisory.cve_id;
      item.cvss = advisory.cvss->score;
      item.cwes = advisory.cwes;
      item.llm_message = explanation.llm_message;
      item.origin_message = c.origin_message;
      item.url = c.ref.api_url;
      item.html_url = c.ref.html_url;
      item.raw_url = f->raw_url;
      item.raw_code = f->raw_code.value_or(std::string{});

      ItemMetrics m;
      m.cve_id = advisory.cve_id;
      m.repo = c.ref.repo_owner + "/" + c.ref.repo_name;
      m.path = f->path;
      if (f->patch_text) {
        auto d = diff::parse_unified_diff(*f->patch_text, f->path);
        m.changed_loc = diff::changed_loc(d);
        m.function_units = diff::count_functions(d, lang);
        for (const auto& loc : diff::extract_locations(d)) m.locations.emplace_back(loc.start, loc.length);
      }
      out.items.push_back(std::move(item));
      out.metrics.push_back(std::move(m));
    }
  }
  if (out.items.empty()) throw EmptyAssembly(advisory.cve_id);
  return out;
}

namespace {

// First 40-hex path segment of a URL.
std::string commit_sha_in(const std::string& url) {
  static const std::regex sha(R"((?:^|/)([0-9a-f]{40})(?:/|$))");
  std::smatch m;
  if (std::regex_search(url, m, sha)) return m[1].str();
  return {};
}

}  // namespace

std::vector<Violation> validate_item(const DatasetItem& item) {
  std::vector<Violation> v;
  if (!is_valid_cve_id(item.cve_id)) v.push_back({"cve_id_malformed", "cve_id"});
  if (!(item.cvss >= 0.0 && item.cvss <= 10.0)) v.push_back({"cvss_out_of_range", "cvss"});
  if (!language_from_name(item.language)) v.push_back({"language_unrecognized", "language"});
  for (std::size_t k = 0; k < item.cwes.size(); ++k)
    if (!is_countable_cwe(item.cwes[k]) && !is_pseudo_cwe(item.cwes[k]))
      v.push_back({"cwe_malformed", "cwes[" + std::to_string(k) + "]"});
  auto sha = commit_sha_in(item.url);
  if (sha.empty()) {
    v.push_back({"commit_sha_missing", "url"});
  } else {
    if (commit_sha_in(item.html_url) != sha) v.push_back({"commit_sha_mismatch", "html_url"});
    if (commit_sha_in(item.raw_url) != sha) v.push_back({"commit_sha_mismatch", "raw_url"});
  }
  return v;
}

std::vector<Violation> validate_items(std::span<const DatasetItem> items) {
  std::vector<Violation> v;
  std::set<std::size_t> seen;
  std::map<std::string, const std::string*> message_of;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& it = items[k];
    auto prefix = "items[" + std::to_string(k) + "].";
    for (auto& x : validate_item(it)) v.push_back({x.code, prefix + x.field});
    if (!seen.insert(it.index).second) v.push_back({"index_duplicate", prefix + "index"});
    auto [pos, inserted] = message_of.emplace(it.cve_id, &it.llm_message);
    if (!inserted && *pos->second != it.llm_message) v.push_back({"llm_message_inconsistent", prefix + "llm_message"});
  }
  if (!items.empty() && seen.size() == items.size() && *seen.rbegin() != items.size() - 1)
    v.push_back({"index_not_contiguous", "index"});
  return v;
}

void assign_indices(std::span<DatasetItem> items) {
  for (std::size_t k = 0; k < items.size(); ++k) items[k].index = k;
}

void assign_indices(std::span<DatasetItem> items, std::span<ItemMetrics> metrics) {
  if (items.size() != metrics.size()) throw Error("item/metrics count mismatch");
  for (std::size_t k = 0; k < items.size(); ++k) items[k].index = metrics[k].index = k;
}

std::string serialize_item(const DatasetItem& item) {
  ojson j;
  j["index"] = item.index;
  j["language"] = item.language;
  j["cve_id"] = item.cve_id;
  j["cvss"] = item.cvss;
  j["cwes"] = item.cwes;
  j["llm_message"] = item.llm_message;
  j["origin_message"] = item.origin_message;
  j["url"] = item.url;
  j["html_url"] = item.html_url;
  j["raw_url"] = item.raw_url;
  j["raw_code"] = item.raw_code;
  return j.dump(-1, ' ', false, ojson::error_handler_t::replace);
}

DatasetItem parse_item(std::string_view line, std::size_t lineno) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), lineno);
  }
  if (!j.is_object()) throw ParseError("record is not an object", lineno);
  if (j.size() != kFieldNames.size()) throw ParseError("record must carry exactly the 11 dataset fields", lineno);
  for (auto name : kFieldNames)
    if (!j.contains(std::string(name))) throw ParseError("record lacks field '" + std::string(name) + "'", lineno);
  try {
    DatasetItem it;
    it.index = j.at("index").get<std::size_t>();
    it.language = j.at("language").get<std::string>();
    it.cve_id = j.at("cve_id").get<std::string>();
    if (!j.at("cvss").is_number()) throw ParseError("cvss must be a number", lineno);
    it.cvss = j.at("cvss").get<double>();
    it.cwes = j.at("cwes").get<std::vector<std::string>>();
    it.llm_message = j.at("llm_message").get<std::string>();
    it.origin_message = j.at("origin_message").get<std::string>();
    it.url = j.at("url").get<std::string>();
    it.html_url = j.at("html_url").get<std::string>();
    it.raw_url = j.at("raw_url").get<std::string>();
    it.raw_code = j.at("raw_code").get<std::string>();
    return it;
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("bad field type: ") + e.what(), lineno);
  }
}

std::size_t write_records(std::vector<DatasetItem> items, const fs::path& path) {
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  auto violations = validate_items(items);
  if (!violations.empty()) {
    std::string what = "refusing to write invalid dataset:";
    for (const auto& v : violations) what += " " + v.code + "@" + v.field;
    throw IntegrityError(what);
  }
  std::string out;
  for (const auto& it : items) {
    out += serialize_item(it);
    out += '\n';
  }
  write_file_atomic(path.string(), out);
  return items.size();
}

namespace {

template <class F>
void for_each_line(const fs::path& path, F&& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    f(line, lineno);
  }
}

}  // namespace

std::vector<DatasetItem> read_records(const fs::path& path) {
  std::vector<DatasetItem> items;
  std::set<std::size_t> seen;
  for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    auto it = parse_item(line, lineno);
    if (!seen.insert(it.index).second)
      throw IntegrityError("line " + std::to_string(lineno) + ": duplicate index " + std::to_string(it.index));
    items.push_back(std::move(it));
  });
  return items;
}

void write_metrics(std::vector<ItemMetrics> metrics, const fs::path& path) {
  std::stable_sort(metrics.begin(), metrics.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  std::string out;
  for (const auto& m : metrics) {
    ojson j;
    j["index"] = m.index;
    j["cve_id"] = m.cve_id;
    j["repo"] = m.repo;
    j["path"] = m.path;
    j["changed_loc"] = m.changed_loc;
    j["function_units"] = m.function_units;
    j["locations"] = ojson::array();
    for (auto [s, l] : m.locations) j["locations"].push_back({{"start", s}, {"length", l}});
    out += j.dump(-1, ' ', false, ojson::error_handler_t::replace) + "\n";
  }
  write_file_atomic(path.string(), out);
}

std::vector<ItemMetrics> read_metrics(const fs::path& path) {
  std::vector<ItemMetrics> out;
  for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    try {
      auto j = ojson::parse(line);
      ItemMetrics m;
      m.index = j.at("index").get<std::size_t>();
      m.cve_id = j.at("cve_id").get<std::string>();
      m.repo = j.value("repo", std::string{});
      m.path = j.at("path").get<std::string>();
      m.changed_loc = j.at("changed_loc").get<std::size_t>();
      m.function_units = j.at("function_units").get<std::size_t>();
      for (const auto& l : j.at("locations"))
        m.locations.emplace_back(l.at("start").get<std::size_t>(), l.at("length").get<std::size_t>());
      out.push_back(std::move(m));
    } catch (const ojson::exception& e) {
      throw ParseError(std::string("malformed metrics record: ") + e.what(), lineno);
    }
  });
  return out;
}

}  // namespace reef::dataset
