#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "reef/cache.hpp"
#include "reef/common.hpp"
#include "reef/http.hpp"

namespace reef::ingest {

struct CvssScore {
  double score = 0.0;
  std::string version;  // "3.1", "3.0" or "2.0"

  bool operator==(const CvssScore&) const = default;
};

struct Reference {
  std::string url;
  std::vector<std::string> tags;

  bool operator==(const Reference&) const = default;
};

struct AdvisoryRecord {
  std::string cve_id;
  std::string published;  // YYYY-MM-DD
  std::optional<CvssScore> cvss;
  std::vector<std::string> cwes;
  std::vector<Reference> references;
  std::string description;

  // CWE ids that count towards coverage statistics (pseudo ids excluded).
  std::vector<std::string> countable_cwes() const;
  bool operator==(const AdvisoryRecord&) const = default;
};

struct CommitRef {
  std::string repo_owner;
  std::string repo_name;
  std::string sha;
  std::string api_url;
  std::string html_url;

  bool abbreviated() const noexcept { return sha.size() < 40; }
  bool operator==(const CommitRef&) const = default;
};

enum class FileStatus { Added, Modified, Removed, Renamed };

std::string_view file_status_name(FileStatus s) noexcept;

struct ChangedFile {
  std::string path;
  FileStatus status = FileStatus::Modified;
  std::size_t additions = 0;
  std::size_t deletions = 0;
  std::optional<std::string> patch_text;  // absent for binary files
  std::string raw_url;
  std::optional<std::string> raw_code;    // fetched lazily

  bool operator==(const ChangedFile&) const = default;
};

struct CommitPatch {
  CommitRef ref;
  std::string origin_message;
  std::vector<ChangedFile> files;

  bool operator==(const CommitPatch&) const = default;
};

// One advisory with the fix commits fetched for it; the record exchanged
// between pipeline stages.
struct CveBundle {
  AdvisoryRecord advisory;
  std::vector<CommitPatch> commits;
  std::vector<std::string> fetch_errors;

  bool operator==(const CveBundle&) const = default;
};

void to_json(nlohmann::json& j, const CvssScore& v);
void from_json(const nlohmann::json& j, CvssScore& v);
void to_json(nlohmann::json& j, const Reference& v);
void from_json(const nlohmann::json& j, Reference& v);
void to_json(nlohmann::json& j, const AdvisoryRecord& v);
void from_json(const nlohmann::json& j, AdvisoryRecord& v);
void to_json(nlohmann::json& j, const CommitRef& v);
void from_json(const nlohmann::json& j, CommitRef& v);
void to_json(nlohmann::json& j, const ChangedFile& v);
void from_json(const nlohmann::json& j, ChangedFile& v);
void to_json(nlohmann::json& j, const CommitPatch& v);
void from_json(const nlohmann::json& j, CommitPatch& v);
void to_json(nlohmann::json& j, const CveBundle& v);
void from_json(const nlohmann::json& j, CveBundle& v);

// --- advisory sources -------------------------------------------------------

// Parses one NVD 2.0 `cve` object (or a `{ "cve": ... }` wrapper).
AdvisoryRecord parse_nvd_cve(const nlohmann::json& cve);
// A feed document: `{ "vulnerabilities": [ { "cve": ... }, ... ] }`.
std::vector<AdvisoryRecord> parse_nvd_document(const nlohmann::json& doc, const std::string& origin);

struct AdvisoryPage {
  std::vector<AdvisoryRecord> records;
  std::optional<std::string> next_cursor;
};

class AdvisorySource {
 public:
  virtual ~AdvisorySource() = default;
  virtual const std::string& id() const noexcept = 0;
  virtual AdvisoryPage fetch(int since_year, const std::optional<std::string>& cursor) = 0;
};

// Directory of NVD-style JSON documents (or one file), read in file-name order.
class FixtureAdvisorySource final : public AdvisorySource {
 public:
  FixtureAdvisorySource(std::string id, std::filesystem::path path, std::size_t page_size = 100);
  const std::string& id() const noexcept override { return id_; }
  AdvisoryPage fetch(int since_year, const std::optional<std::string>& cursor) override;

 private:
  void load();
  std::string id_;
  std::filesystem::path path_;
  std::size_t page_size_;
  std::optional<std::vector<AdvisoryRecord>> records_;
};

// NVD CVE API 2.0 (`?startIndex=&resultsPerPage=`), routed through the cache.
class NvdApiSource final : public AdvisorySource {
 public:
  NvdApiSource(std::string id, std::string base_url, http::Transport& transport, ResponseCache& cache,
               http::RateLimiter& limiter, std::size_t page_size = 2000, std::string api_key = {});
  const std::string& id() const noexcept override { return id_; }
  AdvisoryPage fetch(int since_year, const std::optional<std::string>& cursor) override;

 private:
  std::string id_;
  std::string base_url_;
  http::Transport& transport_;
  ResponseCache& cache_;
  http::RateLimiter& limiter_;
  std::size_t page_size_;
  std::string api_key_;
  std::set<std::string> seen_;
};

AdvisoryPage fetch_advisories(AdvisorySource& source, int since_year, const std::optional<std::string>& cursor);
// Drains every page.
std::vector<AdvisoryRecord> fetch_all_advisories(AdvisorySource& source, int since_year);

// --- fix commit resolution ---------------------------------------------------

struct HostingService {
  std::string web_host = "github.com";
  std::string api_base = "https://api.github.com";
};

// Accumulates across calls.
struct ResolveStats {
  std::size_t commit_references = 0;
  std::size_t skipped_references = 0;
};

// Commit URLs (`/<owner>/<repo>/commit/<sha>` or `/pull/<n>/commits/<sha>`)
// among the advisory references, deduplicated by (owner, repo, sha).
std::vector<CommitRef> resolve_fix_commits(const AdvisoryRecord& advisory, const HostingService& service = {},
                                           ResolveStats* stats = nullptr);

// --- commit fetching -----------------------------------------------------------

class CommitNotFound : public Error {
 public:
  explicit CommitNotFound(const std::string& url) : Error("commit not found: " + url) {}
};

struct FetchOptions {
  bool offline = false;
  std::string token;  // REEF_API_TOKEN
  int max_attempts = 4;
  std::chrono::milliseconds backoff{500};
  std::chrono::milliseconds max_backoff{60000};
};

CommitPatch parse_commit_payload(const std::string& payload, const CommitRef& requested);

class CommitFetcher {
 public:
  // Throws ConfigError when online without a token.
  CommitFetcher(ResponseCache& cache, http::Transport& transport, http::RateLimiter& limiter, FetchOptions options);

  CommitPatch fetch_commit(const CommitRef& ref);
  // Fills raw_code from raw_url; files whose content is unavailable keep nullopt.
  void fetch_raw_code(ChangedFile& file);

  std::size_t network_calls() const noexcept { return network_calls_.load(); }

 private:
  // Cached or fetched entry; 404 entries are returned, not thrown.
  CacheEntry get(const std::string& url, bool json_api);

  ResponseCache& cache_;
  http::Transport& transport_;
  http::RateLimiter& limiter_;
  FetchOptions options_;
  std::atomic<std::size_t> network_calls_{0};
};

struct FetchOutcome {
  CommitRef ref;
  std::optional<CommitPatch> patch;
  std::string error;  // with a patch: raw-code failures only
  bool not_found = false;
};

// Fetches commits with up to `workers` concurrent requests. Results keep input order.
std::vector<FetchOutcome> fetch_commits(CommitFetcher& fetcher, std::span<const CommitRef> refs, std::size_t workers,
                                        bool with_raw_code);

}  // namespace reef::ingest
