#include "reef/ingest.hpp"

#include <algorithm>
#include <atomic>
#include <regex>
#include <thread>
#include <tuple>

#include "reef/diffmodel.hpp"

namespace reef::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> AdvisoryRecord::countable_cwes() const {
  std::vector<std::string> out;
  for (const auto& c : cwes)
    if (is_countable_cwe(c)) out.push_back(c);
  return out;
}

std::string_view file_status_name(FileStatus s) noexcept {
  switch (s) {
    case FileStatus::Added: return "added";
    case FileStatus::Modified: return "modified";
    case FileStatus::Removed: return "removed";
    case FileStatus::Renamed: return "renamed";
  }
  return "modified";
}

namespace {

FileStatus parse_status(const std::string& s) {
  if (s == "added") return FileStatus::Added;
  if (s == "removed") return FileStatus::Removed;
  if (s == "renamed") return FileStatus::Renamed;
  // "modified", "changed", "copied", "unchanged"
  return FileStatus::Modified;
}

template <class T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
  else j[key] = nullptr;
}

template <class T>
void get_optional(const json& j, const char* key, std::optional<T>& v) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) v.reset();
  else v = it->get<T>();
}

}  // namespace

void to_json(json& j, const CvssScore& v) { j = json{{"score", v.score}, {"version", v.version}}; }
void from_json(const json& j, CvssScore& v) {
  j.at("score").get_to(v.score);
  j.at("version").get_to(v.version);
}
void to_json(json& j, const Reference& v) { j = json{{"url", v.url}, {"tags", v.tags}}; }
void from_json(const json& j, Reference& v) {
  j.at("url").get_to(v.url);
  v.tags = j.value("tags", std::vector<std::string>{});
}
void to_json(json& j, const AdvisoryRecord& v) {
  j = json{{"cve_id", v.cve_id},   {"published", v.published},   {"cwes", v.cwes},
           {"references", v.references}, {"description", v.description}};
  put_optional(j, "cvss", v.cvss);
}
void from_json(const json& j, AdvisoryRecord& v) {
  j.at("cve_id").get_to(v.cve_id);
  j.at("published").get_to(v.published);
  get_optional(j, "cvss", v.cvss);
  j.at("cwes").get_to(v.cwes);
  j.at("references").get_to(v.references);
  j.at("description").get_to(v.description);
}
void to_json(json& j, const CommitRef& v) {
  j = json{{"repo_owner", v.repo_owner}, {"repo_name", v.repo_name}, {"sha", v.sha},
           {"api_url", v.api_url},       {"html_url", v.html_url}};
}
void from_json(const json& j, CommitRef& v) {
  j.at("repo_owner").get_to(v.repo_owner);
  j.at("repo_name").get_to(v.repo_name);
  j.at("sha").get_to(v.sha);
  j.at("api_url").get_to(v.api_url);
  j.at("html_url").get_to(v.html_url);
}
void to_json(json& j, const ChangedFile& v) {
  j = json{{"path", v.path},
           {"status", std::string(file_status_name(v.status))},
           {"additions", v.additions},
           {"deletions", v.deletions},
           {"raw_url", v.raw_url}};
  put_optional(j, "patch_text", v.patch_text);
  put_optional(j, "raw_code", v.raw_code);
}
void from_json(const json& j, ChangedFile& v) {
  j.at("path").get_to(v.path);
  v.status = parse_status(j.at("status").get<std::string>());
  j.at("additions").get_to(v.additions);
  j.at("deletions").get_to(v.deletions);
  j.at("raw_url").get_to(v.raw_url);
  get_optional(j, "patch_text", v.patch_text);
  get_optional(j, "raw_code", v.raw_code);
}
void to_json(json& j, const CommitPatch& v) {
  j = json{{"ref", v.ref}, {"origin_message", v.origin_message}, {"files", v.files}};
}
void from_json(const json& j, CommitPatch& v) {
  j.at("ref").get_to(v.ref);
  j.at("origin_message").get_to(v.origin_message);
  j.at("files").get_to(v.files);
}

void to_json(json& j, const CveBundle& v) {
  j = json{{"advisory", v.advisory}, {"commits", v.commits}, {"fetch_errors", v.fetch_errors}};
}
void from_json(const json& j, CveBundle& v) {
  j.at("advisory").get_to(v.advisory);
  j.at("commits").get_to(v.commits);
  v.fetch_errors = j.value("fetch_errors", std::vector<std::string>{});
}

// --- NVD parsing ---------------------------------------------------------------

namespace {

std::optional<CvssScore> pick_cvss(const json& metrics) {
  static constexpr std::pair<const char*, const char*> kOrder[] = {
      {"cvssMetricV31", "3.1"}, {"cvssMetricV30", "3.0"}, {"cvssMetricV2", "2.0"}};
  for (auto [key, version] : kOrder) {
    auto it = metrics.find(key);
    if (it == metrics.end() || !it->is_array() || it->empty()) continue;
    const json* chosen = &it->front();
    for (const auto& m : *it)
      if (m.value("type", std::string{}) == "Primary") {
        chosen = &m;
        break;
      }
    const auto& data = chosen->at("cvssData");
    return CvssScore{data.at("baseScore").get<double>(), data.value("version", std::string(version))};
  }
  return std::nullopt;
}

}  // namespace

AdvisoryRecord parse_nvd_cve(const json& input) {
  const json& cve = input.contains("cve") ? input.at("cve") : input;
  std::string id = cve.value("id", std::string{});
  try {
    AdvisoryRecord r;
    r.cve_id = id;
    if (!is_valid_cve_id(r.cve_id)) throw ParseError("malformed CVE id '" + id + "'");
    auto published = cve.at("published").get<std::string>();
    if (published.size() < 10 || published[4] != '-' || published[7] != '-')
      throw ParseError("malformed published date '" + published + "'");
    r.published = published.substr(0, 10);
    if (auto m = cve.find("metrics"); m != cve.end()) r.cvss = pick_cvss(*m);
    if (r.cvss && (r.cvss->score < 0.0 || r.cvss->score > 10.0))
      throw ParseError("CVSS score out of range");
    if (auto w = cve.find("weaknesses"); w != cve.end())
      for (const auto& weakness : *w)
        for (const auto& d : weakness.value("description", json::array())) {
          auto v = d.at("value").get<std::string>();
          if (std::find(r.cwes.begin(), r.cwes.end(), v) == r.cwes.end()) r.cwes.push_back(v);
        }
    if (auto refs = cve.find("references"); refs != cve.end())
      for (const auto& ref : *refs) r.references.push_back(ref.get<Reference>());
    if (auto ds = cve.find("descriptions"); ds != cve.end() && !ds->empty()) {
      const json* chosen = &ds->front();
      for (const auto& d : *ds)
        if (d.value("lang", std::string{}) == "en") {
          chosen = &d;
          break;
        }
      r.description = chosen->value("value", std::string{});
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError("advisory '" + id + "': " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("advisory '" + id + "': " + e.what());
  }
}

std::vector<AdvisoryRecord> parse_nvd_document(const json& doc, const std::string& origin) {
  std::vector<AdvisoryRecord> out;
  try {
    if (doc.contains("vulnerabilities")) {
      std::size_t k = 0;
      for (const auto& v : doc.at("vulnerabilities")) {
        try {
          out.push_back(parse_nvd_cve(v));
        } catch (const ParseError& e) {
          throw ParseError(origin + " record #" + std::to_string(k) + ": " + e.what());
        }
        ++k;
      }
    } else {
      out.push_back(parse_nvd_cve(doc));
    }
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return out;
}

// --- sources ---------------------------------------------------------------------

namespace {

std::size_t decode_cursor(const std::optional<std::string>& cursor) {
  if (!cursor) return 0;
  try {
    return std::stoul(*cursor);
  } catch (const std::exception&) {
    throw ParseError("invalid page cursor '" + *cursor + "'");
  }
}

bool year_admitted(const AdvisoryRecord& r, int since_year) { return cve_year(r.cve_id).value_or(0) >= since_year; }

}  // namespace

FixtureAdvisorySource::FixtureAdvisorySource(std::string id, fs::path path, std::size_t page_size)
    : id_(std::move(id)), path_(std::move(path)), page_size_(std::max<std::size_t>(1, page_size)) {}

void FixtureAdvisorySource::load() {
  std::vector<fs::path> files;
  if (fs::is_directory(path_)) {
    for (const auto& e : fs::directory_iterator(path_))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path_)) {
    files.push_back(path_);
  } else {
    throw TransportError("advisory source '" + id_ + "' unreachable: " + path_.string());
  }
  std::vector<AdvisoryRecord> all;
  std::set<std::string> seen;
  for (const auto& f : files) {
    json doc;
    try {
      doc = json::parse(read_file(f.string()));
    } catch (const json::exception& e) {
      throw ParseError(f.string() + ": " + e.what());
    }
    for (auto& r : parse_nvd_document(doc, f.string()))
      if (seen.insert(r.cve_id).second) all.push_back(std::move(r));
  }
  records_ = std::move(all);
}

AdvisoryPage FixtureAdvisorySource::fetch(int since_year, const std::optional<std::string>& cursor) {
  if (!records_) load();
  // The cursor indexes the year-filtered sequence.
  std::vector<const AdvisoryRecord*> admitted;
  for (const auto& r : *records_)
    if (year_admitted(r, since_year)) admitted.push_back(&r);
  std::size_t start = decode_cursor(cursor);
  AdvisoryPage page;
  for (std::size_t k = start; k < admitted.size() && k < start + page_size_; ++k) page.records.push_back(*admitted[k]);
  if (start + page_size_ < admitted.size()) page.next_cursor = std::to_string(start + page_size_);
  return page;
}

NvdApiSource::NvdApiSource(std::string id, std::string base_url, http::Transport& transport, ResponseCache& cache,
                           http::RateLimiter& limiter, std::size_t page_size, std::string api_key)
    : id_(std::move(id)),
      base_url_(std::move(base_url)),
      transport_(transport),
      cache_(cache),
      limiter_(limiter),
      page_size_(std::max<std::size_t>(1, page_size)),
      api_key_(std::move(api_key)) {}

AdvisoryPage NvdApiSource::fetch(int since_year, const std::optional<std::string>& cursor) {
  std::size_t start = decode_cursor(cursor);
  std::string url = base_url_ + (base_url_.find('?') == std::string::npos ? "?" : "&") +
                    "startIndex=" + std::to_string(start) + "&resultsPerPage=" + std::to_string(page_size_);
  std::string payload;
  if (auto hit = cache_.lookup(url)) {
    payload = hit->payload;
  } else {
    limiter_.acquire();
    http::Request req;
    req.url = url;
    if (!api_key_.empty()) req.headers["apiKey"] = api_key_;
    auto res = transport_.send(req);
    if (res.status == 429 || res.status == 403 || res.status >= 500)
      throw TransportError("advisory source '" + id_ + "' returned HTTP " + std::to_string(res.status));
    if (res.status != 200)
      throw TransportError("advisory source '" + id_ + "' returned HTTP " + std::to_string(res.status), false);
    payload = res.body;
    cache_.store({url, 200, payload, {}});
  }
  json doc;
  try {
    doc = json::parse(payload);
  } catch (const json::exception& e) {
    throw ParseError(url + ": " + e.what());
  }
  AdvisoryPage page;
  for (auto& r : parse_nvd_document(doc, url))
    if (year_admitted(r, since_year) && seen_.insert(r.cve_id).second) page.records.push_back(std::move(r));
  std::size_t total = doc.value("totalResults", std::size_t{0});
  std::size_t got = doc.contains("vulnerabilities") ? doc.at("vulnerabilities").size() : 0;
  if (got > 0 && start + got < total) page.next_cursor = std::to_string(start + got);
  return page;
}

AdvisoryPage fetch_advisories(AdvisorySource& source, int since_year, const std::optional<std::string>& cursor) {
  return source.fetch(since_year, cursor);
}

std::vector<AdvisoryRecord> fetch_all_advisories(AdvisorySource& source, int since_year) {
  std::vector<AdvisoryRecord> out;
  std::set<std::string> seen;
  std::optional<std::string> cursor;
  do {
    auto page = fetch_advisories(source, since_year, cursor);
    for (auto& r : page.records)
      if (seen.insert(r.cve_id).second) out.push_back(std::move(r));
    cursor = page.next_cursor;
  } while (cursor);
  return out;
}

// --- commit resolution -------------------------------------------------------------

std::vector<CommitRef> resolve_fix_commits(const AdvisoryRecord& advisory, const HostingService& service,
                                           ResolveStats* stats) {
  std::string host = service.web_host;
  std::string escaped;
  for (char c : host) {
    if (c == '.') escaped += "\\";
    escaped += c;
  }
  const std::regex commit_url("^https?://(?:www\\.)?" + escaped +
                                  "/([A-Za-z0-9_.-]+)/([A-Za-z0-9_.-]+)/(?:commit|pull/[0-9]+/commits)/"
                                  "([0-9a-fA-F]{7,40})(?:\\.patch|\\.diff)?/?(?:[?#].*)?$",
                              std::regex::ECMAScript | std::regex::icase);
  std::vector<CommitRef> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  ResolveStats local;
  for (const auto& ref : advisory.references) {
    std::smatch m;
    std::string url(trim(ref.url));
    if (!std::regex_match(url, m, commit_url)) {
      ++local.skipped_references;
      continue;
    }
    CommitRef c;
    c.repo_owner = m[1].str();
    c.repo_name = m[2].str();
    c.sha = to_lower(m[3].str());
    auto key = std::make_tuple(to_lower(c.repo_owner), to_lower(c.repo_name), c.sha);
    if (!seen.insert(key).second) continue;
    c.api_url = service.api_base + "/repos/" + c.repo_owner + "/" + c.repo_name + "/commits/" + c.sha;
    c.html_url = "https://" + service.web_host + "/" + c.repo_owner + "/" + c.repo_name + "/commit/" + c.sha;
    ++local.commit_references;
    out.push_back(std::move(c));
  }
  if (stats) {
    stats->commit_references += local.commit_references;
    stats->skipped_references += local.skipped_references;
  }
  return out;
}

// --- commit fetching ----------------------------------------------------------------

CommitPatch parse_commit_payload(const std::string& payload, const CommitRef& requested) {
  json j;
  try {
    j = json::parse(payload);
  } catch (const json::exception& e) {
    throw ParseError("commit payload " + requested.api_url + ": " + e.what());
  }
  try {
    CommitPatch p;
    p.ref = requested;
    auto sha = to_lower(j.at("sha").get<std::string>());
    if (sha.size() != 40 || sha.find_first_not_of("0123456789abcdef") != std::string::npos ||
        sha.compare(0, requested.sha.size(), requested.sha) != 0)
      throw ParseError("payload sha " + sha + " does not match requested " + requested.sha);
    if (requested.abbreviated()) {
      p.ref.sha = sha;
      p.ref.api_url = j.value("url", requested.api_url);
      p.ref.html_url = j.value("html_url", requested.html_url);
    }
    p.origin_message = j.at("commit").at("message").get<std::string>();
    for (const auto& f : j.value("files", json::array())) {
      ChangedFile cf;
      cf.path = f.at("filename").get<std::string>();
      cf.status = parse_status(f.value("status", std::string("modified")));
      cf.additions = f.value("additions", std::size_t{0});
      cf.deletions = f.value("deletions", std::size_t{0});
      cf.raw_url = f.value("raw_url", std::string{});
      if (auto patch = f.find("patch"); patch != f.end() && patch->is_string()) {
        cf.patch_text = patch->get<std::string>();
        try {
          (void)diff::parse_unified_diff(*cf.patch_text, cf.path);
        } catch (const diff::DiffParseError& e) {
          throw ParseError("file " + cf.path + ": " + e.what());
        }
      }
      p.files.push_back(std::move(cf));
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError("commit payload " + requested.api_url + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("commit payload " + requested.api_url + ": " + e.what());
  }
}

CommitFetcher::CommitFetcher(ResponseCache& cache, http::Transport& transport, http::RateLimiter& limiter,
                             FetchOptions options)
    : cache_(cache), transport_(transport), limiter_(limiter), options_(std::move(options)) {
  if (!options_.offline && options_.token.empty())
    throw ConfigError("online commit fetching requires an access token (set REEF_API_TOKEN)");
}

CacheEntry CommitFetcher::get(const std::string& url, bool json_api) {
  if (auto hit = cache_.lookup(url)) return *hit;
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, options_.max_attempts); ++attempt) {
    limiter_.acquire();
    http::Request req;
    req.url = url;
    if (json_api) req.headers["Accept"] = "application/vnd.github+json";
    req.headers["User-Agent"] = "reef";
    if (!options_.token.empty()) req.headers["Authorization"] = "Bearer " + options_.token;
    http::Response res;
    try {
      ++network_calls_;
      res = transport_.send(req);
    } catch (const TransportError& e) {
      if (!e.retriable()) throw;
      last_error = e.what();
      res.status = 0;
    }
    if (res.status == 200 || res.status == 404 || res.status == 422) {
      CacheEntry e{url, res.status == 200 ? 200 : 404, res.status == 200 ? res.body : std::string{}, {}};
      cache_.store(e);
      return e;
    }
    bool rate_limited = res.status == 429 ||
                        (res.status == 403 && (res.headers.count("x-ratelimit-remaining") &&
                                               res.headers.at("x-ratelimit-remaining") == "0"));
    bool retriable = res.status == 0 || rate_limited || res.status >= 500;
    if (!retriable) throw TransportError(url + ": HTTP " + std::to_string(res.status), false);
    if (res.status != 0) last_error = url + ": HTTP " + std::to_string(res.status);
    if (attempt + 1 >= options_.max_attempts) break;
    auto delay = options_.backoff * (1 << std::min(attempt, 16));
    if (auto it = res.headers.find("retry-after"); it != res.headers.end()) {
      try {
        delay = std::chrono::seconds(std::stol(it->second));
      } catch (const std::exception&) {
      }
    }
    std::this_thread::sleep_for(std::min(delay, options_.max_backoff));
  }
  throw TransportError("giving up after " + std::to_string(options_.max_attempts) + " attempts: " + last_error);
}

CommitPatch CommitFetcher::fetch_commit(const CommitRef& ref) {
  auto entry = get(ref.api_url, true);
  if (entry.status == 404) throw CommitNotFound(ref.api_url);
  return parse_commit_payload(entry.payload, ref);
}

void CommitFetcher::fetch_raw_code(ChangedFile& file) {
  if (file.raw_code || file.raw_url.empty() || file.status == FileStatus::Removed) return;
  auto entry = get(file.raw_url, false);
  if (entry.status == 200) file.raw_code = entry.payload;
}

std::vector<FetchOutcome> fetch_commits(CommitFetcher& fetcher, std::span<const CommitRef> refs, std::size_t workers,
                                        bool with_raw_code) {
  std::vector<FetchOutcome> out(refs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k; (k = next++) < refs.size();) {
      auto& o = out[k];
      o.ref = refs[k];
      try {
        auto patch = fetcher.fetch_commit(refs[k]);
        if (with_raw_code) {
          std::vector<std::string> paths;
          for (const auto& f : patch.files) paths.push_back(f.path);
          for (auto& f : patch.files) {
            if (!is_recognized(diff::detect_language(f.path, paths))) continue;
            try {
              fetcher.fetch_raw_code(f);
            } catch (const Error& e) {
              // The commit stays usable; the missing file body is reported.
              if (!o.error.empty()) o.error += "; ";
              o.error += e.what();
            }
          }
        }
        o.patch = std::move(patch);
      } catch (const CommitNotFound& e) {
        o.not_found = true;
        o.error = e.what();
      } catch (const Error& e) {
        o.error = e.what();
      }
    }
  };
  std::size_t n = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, refs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace reef::ingest
