#include "reef/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "reef/analytics.hpp"
#include "reef/cache.hpp"
#include "reef/dataset.hpp"
#include "reef/evaluate.hpp"

namespace reef::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// --- config ------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown config key " + (where.empty() ? k : where + "." + k));
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key " + (where.empty() ? std::string(key) : where + "." + key) + " has the wrong type");
  }
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
  check_keys(j, "", {"sources", "since_year", "filter", "enrich", "provider", "fetch", "cache_dir", "output_dir",
                     "offline", "analytics", "eval"});
  PipelineConfig c;
  if (auto it = j.find("sources"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("sources: expected an array");
    for (const auto& s : *it) {
      check_keys(s, "sources[]", {"id", "kind", "path", "url", "page_size"});
      SourceConfig sc;
      read(s, "id", sc.id, "sources[]");
      read(s, "kind", sc.kind, "sources[]");
      read(s, "path", sc.path, "sources[]");
      read(s, "url", sc.url, "sources[]");
      read(s, "page_size", sc.page_size, "sources[]");
      sc.path = resolve(base, sc.path);
      c.sources.push_back(std::move(sc));
    }
  }
  read(j, "since_year", c.since_year, "");
  if (auto it = j.find("filter"); it != j.end()) {
    check_keys(*it, "filter", {"cvss_threshold", "fix_score_threshold", "focus_penalty", "commit_cap"});
    read(*it, "cvss_threshold", c.filter.cvss_threshold, "filter");
    read(*it, "fix_score_threshold", c.filter.fix_score_threshold, "filter");
    read(*it, "focus_penalty", c.filter.focus_penalty, "filter");
    read(*it, "commit_cap", c.filter.commit_cap, "filter");
  }
  if (auto it = j.find("enrich"); it != j.end()) {
    check_keys(*it, "enrich", {"pattern", "max_output_tokens", "max_input_tokens", "chars_per_token", "few_shot_k",
                               "max_attempts", "exemplars", "templates"});
    std::string pattern(enrich::pattern_name(c.enrich.pattern));
    read(*it, "pattern", pattern, "enrich");
    try {
      c.enrich.pattern = enrich::parse_pattern(pattern);
    } catch (const Error& e) {
      throw ConfigError(std::string("enrich.pattern: ") + e.what());
    }
    read(*it, "max_output_tokens", c.enrich.max_output_tokens, "enrich");
    read(*it, "max_input_tokens", c.enrich.max_input_tokens, "enrich");
    read(*it, "chars_per_token", c.enrich.chars_per_token, "enrich");
    read(*it, "few_shot_k", c.enrich.few_shot_k, "enrich");
    read(*it, "max_attempts", c.enrich.max_attempts, "enrich");
    read(*it, "exemplars", c.exemplars, "enrich");
    read(*it, "templates", c.templates, "enrich");
    c.exemplars = resolve(base, c.exemplars);
    c.templates = resolve(base, c.templates);
  }
  if (auto it = j.find("provider"); it != j.end()) {
    check_keys(*it, "provider", {"id", "canned_dir", "endpoint", "model"});
    read(*it, "id", c.provider.id, "provider");
    read(*it, "canned_dir", c.provider.canned_dir, "provider");
    read(*it, "endpoint", c.provider.endpoint, "provider");
    read(*it, "model", c.provider.model, "provider");
    c.provider.canned_dir = resolve(base, c.provider.canned_dir);
  }
  if (auto it = j.find("fetch"); it != j.end()) {
    check_keys(*it, "fetch", {"workers", "rate_per_second", "burst", "max_attempts", "backoff_ms", "fixtures",
                              "web_host", "api_base"});
    read(*it, "workers", c.fetch.workers, "fetch");
    read(*it, "rate_per_second", c.fetch.rate_per_second, "fetch");
    read(*it, "burst", c.fetch.burst, "fetch");
    read(*it, "max_attempts", c.fetch.max_attempts, "fetch");
    read(*it, "backoff_ms", c.fetch.backoff_ms, "fetch");
    read(*it, "fixtures", c.fetch.fixtures, "fetch");
    read(*it, "web_host", c.fetch.hosting.web_host, "fetch");
    read(*it, "api_base", c.fetch.hosting.api_base, "fetch");
    for (auto& f : c.fetch.fixtures) f = resolve(base, f);
  }
  read(j, "cache_dir", c.cache_dir, "");
  read(j, "output_dir", c.output_dir, "");
  read(j, "offline", c.offline, "");
  if (auto it = j.find("analytics"); it != j.end()) {
    check_keys(*it, "analytics", {"top_k", "findings", "autofill_prefixes", "min_message_length"});
    read(*it, "top_k", c.analytics.top_k, "analytics");
    read(*it, "findings", c.analytics.findings, "analytics");
    read(*it, "autofill_prefixes", c.analytics.low_quality.autofill_prefixes, "analytics");
    read(*it, "min_message_length", c.analytics.low_quality.min_length, "analytics");
    c.analytics.findings = resolve(base, c.analytics.findings);
  }
  if (auto it = j.find("eval"); it != j.end()) {
    check_keys(*it, "eval", {"criteria_ratings", "human_ratings"});
    read(*it, "criteria_ratings", c.eval.criteria_ratings, "eval");
    read(*it, "human_ratings", c.eval.human_ratings, "eval");
    c.eval.criteria_ratings = resolve(base, c.eval.criteria_ratings);
    c.eval.human_ratings = resolve(base, c.eval.human_ratings);
  }
  c.output_dir = resolve(base, c.output_dir);
  c.cache_dir = c.cache_dir.empty() ? (fs::path(c.output_dir) / "cache").string() : resolve(base, c.cache_dir);
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path.string());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

void PipelineConfig::validate() const {
  filter.validate();
  for (const auto& s : sources) {
    if (s.id.empty()) throw ConfigError("every source needs an id");
    if (s.kind == "fixture") {
      if (s.path.empty()) throw ConfigError("source " + s.id + ": fixture sources need a path");
    } else if (s.kind == "nvd") {
      if (s.url.empty()) throw ConfigError("source " + s.id + ": nvd sources need a url");
    } else {
      throw ConfigError("source " + s.id + ": kind must be fixture or nvd");
    }
    if (s.page_size == 0) throw ConfigError("source " + s.id + ": page_size must be positive");
  }
  if (since_year < 1999) throw ConfigError("since_year must be 1999 or later");
  if (enrich.max_input_tokens == 0 || enrich.max_output_tokens == 0)
    throw ConfigError("enrich token budgets must be positive");
  if (enrich.chars_per_token == 0) throw ConfigError("enrich.chars_per_token must be positive");
  if (enrich.max_attempts < 1) throw ConfigError("enrich.max_attempts must be at least 1");
  if (provider.id != "canned" && provider.id != "chat") throw ConfigError("provider.id must be canned or chat");
  if (fetch.workers == 0) throw ConfigError("fetch.workers must be positive");
  if (fetch.max_attempts < 1) throw ConfigError("fetch.max_attempts must be at least 1");
  if (fetch.backoff_ms < 0) throw ConfigError("fetch.backoff_ms must be non-negative");
  if (analytics.top_k == 0) throw ConfigError("analytics.top_k must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

// --- stages ------------------------------------------------------------------------

std::string_view stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::Collect: return "collect";
    case Stage::Filter: return "filter";
    case Stage::Enrich: return "enrich";
    case Stage::Analyze: return "analyze";
    case Stage::Eval: return "eval";
    case Stage::Validate: return "validate";
    case Stage::Export: return "export";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) noexcept {
  for (auto s : {Stage::Collect, Stage::Filter, Stage::Enrich, Stage::Analyze, Stage::Eval, Stage::Validate,
                 Stage::Export})
    if (stage_name(s) == name) return s;
  return std::nullopt;
}

Environment Environment::process() {
  Environment env;
  env.getenv = [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  return env;
}

namespace {

struct Context {
  const PipelineConfig& config;
  Environment& env;
  const StageOptions& options;
  fs::path out;
  StageResult result;

  std::unique_ptr<http::NetworkGuard> own_guard;
  std::unique_ptr<http::NetworkTransport> own_transport;

  fs::path file(const char* name) const { return out / name; }

  std::optional<std::string> getenv(const std::string& name) const {
    return env.getenv ? env.getenv(name) : std::nullopt;
  }

  http::NetworkGuard& guard() {
    if (env.guard) return *env.guard;
    if (!own_guard) own_guard = std::make_unique<http::NetworkGuard>();
    return *own_guard;
  }

  http::Transport& transport() {
    if (config.offline) return guard();
    if (env.transport) return *env.transport;
    if (!own_transport) own_transport = std::make_unique<http::NetworkTransport>();
    return *own_transport;
  }

  void require(const char* name, Stage producer) const {
    if (!fs::exists(file(name))) throw DependencyError(file(name).string(), producer);
  }

  void error(std::string msg) { result.errors.push_back(std::move(msg)); }
};

template <class T>
std::string jsonl(const std::vector<T>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += json(r).dump();
    out += '\n';
  }
  return out;
}

std::string jsonl(const std::vector<ojson>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

template <class T>
std::vector<T> read_jsonl(const fs::path& path) {
  std::vector<T> out;
  std::istringstream in(read_file(path.string()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), lineno);
    }
  }
  return out;
}

void write_json(const fs::path& path, const ojson& doc) { write_file_atomic(path.string(), doc.dump(2) + "\n"); }

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// collect: advisories -> fix commits -> collected.jsonl
void collect(Context& cx) {
  const auto& cfg = cx.config;
  ingest::FetchOptions fo;
  fo.offline = cfg.offline;
  fo.max_attempts = cfg.fetch.max_attempts;
  fo.backoff = std::chrono::milliseconds(cfg.fetch.backoff_ms);
  if (!cfg.offline) {
    auto token = cx.getenv("REEF_API_TOKEN");
    if (!token) throw ConfigError("online collection requires REEF_API_TOKEN to be set");
    fo.token = *token;
  }
  if (cfg.sources.empty()) throw ConfigError("collect needs at least one source");

  std::vector<fs::path> layers(cfg.fetch.fixtures.begin(), cfg.fetch.fixtures.end());
  ResponseCache cache(cfg.cache_dir, layers);
  http::RateLimiter limiter(cfg.fetch.rate_per_second, cfg.fetch.burst);
  auto& transport = cx.transport();

  std::map<std::string, ingest::AdvisoryRecord> advisories;
  std::size_t duplicates = 0;
  for (const auto& s : cfg.sources) {
    std::unique_ptr<ingest::AdvisorySource> src;
    if (s.kind == "fixture")
      src = std::make_unique<ingest::FixtureAdvisorySource>(s.id, s.path, s.page_size);
    else
      src = std::make_unique<ingest::NvdApiSource>(s.id, s.url, transport, cache, limiter, s.page_size,
                                                   cx.getenv("REEF_NVD_API_KEY").value_or(""));
    for (auto& a : ingest::fetch_all_advisories(*src, cfg.since_year)) {
      auto id = a.cve_id;
      if (!advisories.emplace(id, std::move(a)).second) ++duplicates;
    }
  }

  std::vector<ingest::CommitRef> refs;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // per advisory, into refs
  ingest::ResolveStats rs;
  for (const auto& [id, a] : advisories) {
    auto r = ingest::resolve_fix_commits(a, cfg.fetch.hosting, &rs);
    spans.emplace_back(refs.size(), r.size());
    refs.insert(refs.end(), r.begin(), r.end());
  }

  ingest::CommitFetcher fetcher(cache, transport, limiter, fo);
  auto outcomes = ingest::fetch_commits(fetcher, refs, cfg.fetch.workers, true);

  std::vector<ingest::CveBundle> bundles;
  std::size_t fetched = 0, not_found = 0, failed = 0, k = 0;
  for (const auto& [id, a] : advisories) {
    ingest::CveBundle b;
    b.advisory = a;
    auto [first, count] = spans[k++];
    for (std::size_t i = first; i < first + count; ++i) {
      auto& o = outcomes[i];
      if (o.patch) {
        b.commits.push_back(std::move(*o.patch));
        ++fetched;
        if (!o.error.empty()) {
          b.fetch_errors.push_back(o.error);
          cx.error(id + ": " + o.error);
        }
      } else {
        b.fetch_errors.push_back(o.error);
        if (o.not_found) {
          ++not_found;
        } else {
          ++failed;
          cx.error(id + ": " + o.error);
        }
      }
    }
    bundles.push_back(std::move(b));
  }
  write_file_atomic(cx.file(files::kCollected).string(), jsonl(bundles));

  auto& r = cx.result.report;
  r["advisories"] = bundles.size();
  r["duplicate_advisories"] = duplicates;
  r["commit_references"] = rs.commit_references;
  r["skipped_references"] = rs.skipped_references;
  r["commits_fetched"] = fetched;
  r["commits_not_found"] = not_found;
  r["commits_failed"] = failed;
  r["network_requests"] = fetcher.network_calls();
}

// filter: collected.jsonl -> filtered.jsonl, filter_decisions.jsonl, cve_metadata.jsonl
void filter_stage(Context& cx) {
  cx.require(files::kCollected, Stage::Collect);
  auto bundles = read_jsonl<ingest::CveBundle>(cx.file(files::kCollected));
  std::vector<ingest::CveBundle> kept;
  std::vector<ojson> decisions, metadata;
  std::map<std::string, std::size_t> by_reason;
  for (auto& b : bundles) {
    auto d = filter::passes_filters(b.advisory, b.commits, cx.config.filter);
    for (auto reason : d.reasons) ++by_reason[std::string(filter::reason_code(reason))];
    decisions.push_back(filter::to_json(d));
    if (d.pass) {
      ojson m;
      m["cve_id"] = b.advisory.cve_id;
      m["published"] = b.advisory.published;
      m["fix_score"] = d.report ? d.report->score : 0.0;
      metadata.push_back(std::move(m));
      kept.push_back(std::move(b));
    }
  }
  auto decisions_text = jsonl(decisions);
  write_file_atomic(cx.file(files::kFiltered).string(), jsonl(kept));
  write_file_atomic(cx.file(files::kDecisions).string(), decisions_text);
  write_file_atomic(cx.file(files::kCveMetadata).string(), jsonl(metadata));
  if (cx.options.filter_report) write_file_atomic(*cx.options.filter_report, decisions_text);

  auto& r = cx.result.report;
  r["considered"] = bundles.size();
  r["passed"] = kept.size();
  r["rejected"] = bundles.size() - kept.size();
  r["reasons"] = by_reason;
}

std::unique_ptr<enrich::LlmProvider> make_provider(Context& cx) {
  const auto& p = cx.config.provider;
  if (p.id == "canned") {
    if (p.canned_dir.empty()) throw ConfigError("provider.canned_dir is required for the canned provider");
    return std::make_unique<enrich::CannedProvider>(p.canned_dir);
  }
  if (p.endpoint.empty() || p.model.empty()) throw ConfigError("the chat provider needs provider.endpoint and provider.model");
  if (cx.config.offline) throw ConfigError("the chat provider needs network access; use the canned provider offline");
  auto token = cx.getenv("REEF_LLM_TOKEN");
  if (!token) throw ConfigError("the chat provider requires REEF_LLM_TOKEN to be set");
  return std::make_unique<enrich::ChatCompletionProvider>(p.endpoint, p.model, *token, cx.transport());
}

// enrich: filtered.jsonl -> explanations.jsonl, dataset.jsonl, item_metrics.jsonl
void enrich_stage(Context& cx) {
  cx.require(files::kFiltered, Stage::Filter);
  const auto& cfg = cx.config;
  auto provider = make_provider(cx);
  enrich::ExemplarLibrary exemplars;
  if (!cfg.exemplars.empty()) exemplars = enrich::ExemplarLibrary::load(cfg.exemplars);
  if (cfg.enrich.pattern != enrich::PromptPattern::ZeroShot && exemplars.items.empty())
    throw ConfigError("enrich.exemplars must name a non-empty library for pattern " +
                      std::string(enrich::pattern_name(cfg.enrich.pattern)));
  if (cfg.enrich.pattern == enrich::PromptPattern::FewShot && exemplars.items.size() < 2)
    throw ConfigError("few_shot needs at least two exemplars");
  auto templates = cfg.templates.empty() ? enrich::PromptTemplates::defaults()
                                         : enrich::PromptTemplates::load(cfg.templates);

  auto bundles = read_jsonl<ingest::CveBundle>(cx.file(files::kFiltered));

  // Earlier successes with an identical prompt are reused, so reruns do not
  // pay for the provider again.
  std::map<std::string, enrich::ExplanationResult> prior;
  if (fs::exists(cx.file(files::kExplanations))) {
    try {
      for (auto& e : read_jsonl<enrich::ExplanationResult>(cx.file(files::kExplanations)))
        if (!e.failed) prior.emplace(e.cve_id, std::move(e));
    } catch (const Error&) {
      prior.clear();
    }
  }

  enrich::ExplanationSink sink;
  std::vector<dataset::DatasetItem> items;
  std::vector<dataset::ItemMetrics> metrics;
  std::size_t reused = 0, generated = 0, failed = 0, truncated = 0;
  for (const auto& b : bundles) {
    const auto& id = b.advisory.cve_id;
    enrich::ExplanationResult res;
    try {
      auto hash = sha256_hex(enrich::prepare_prompt(b, cfg.enrich, exemplars, templates).render());
      if (auto it = prior.find(id);
          it != prior.end() && it->second.prompt_hash == hash && it->second.provider_id == provider->id()) {
        res = it->second;
        ++reused;
      } else {
        res = enrich::generate_explanation(b, *provider, cfg.enrich, exemplars, templates);
        ++generated;
      }
    } catch (const Error& e) {
      res.cve_id = id;
      res.provider_id = provider->id();
      res.failed = true;
      res.error = e.what();
      ++failed;
      cx.error(e.what());
    }
    if (res.truncated) ++truncated;
    // A failed explanation keeps its items with an empty llm_message; the
    // flag lives in explanations.jsonl so a rerun can fill it in.
    try {
      auto a = dataset::assemble_items(b.advisory, b.commits, res);
      std::move(a.items.begin(), a.items.end(), std::back_inserter(items));
      std::move(a.metrics.begin(), a.metrics.end(), std::back_inserter(metrics));
    } catch (const Error& e) {
      cx.error(id + ": " + e.what());
    }
    sink.add(std::move(res));
  }
  dataset::assign_indices(items, metrics);
  write_file_atomic(cx.file(files::kExplanations).string(), jsonl(sink.results()));
  auto n = dataset::write_records(items, cx.file(files::kDataset));
  dataset::write_metrics(metrics, cx.file(files::kMetrics));

  auto& r = cx.result.report;
  r["cves"] = bundles.size();
  r["generated"] = generated;
  r["reused"] = reused;
  r["failed"] = failed;
  r["truncated"] = truncated;
  r["items"] = n;
  r["provider"] = provider->id();
  r["pattern"] = enrich::pattern_name(cfg.enrich.pattern);
}

void analyze_stage(Context& cx) {
  cx.require(files::kDataset, Stage::Enrich);
  cx.require(files::kMetrics, Stage::Enrich);
  auto items = dataset::read_records(cx.file(files::kDataset));
  auto metrics = dataset::read_metrics(cx.file(files::kMetrics));
  if (metrics.size() != items.size())
    throw dataset::IntegrityError("item_metrics.jsonl does not match dataset.jsonl; rerun `reef enrich`");
  const auto& rules = cx.config.analytics.low_quality;

  auto dir = cx.out / files::kAnalysisDir;
  fs::create_directories(dir);
  auto stats = analytics::per_language_stats(items, metrics);
  auto msgs = analytics::message_stats(items, metrics, rules);
  auto top = analytics::top_k_cwe(items, cx.config.analytics.top_k);
  auto coverage = analytics::cwe_coverage(items);
  write_json(dir / "language_stats.json", analytics::to_json(stats));
  write_file_atomic((dir / "language_stats.txt").string(), analytics::render_text(stats));
  write_json(dir / "message_stats.json", analytics::to_json(msgs));
  write_file_atomic((dir / "message_stats.txt").string(), analytics::render_text(msgs));
  write_json(dir / "cwe_top.json", analytics::to_json(std::span<const analytics::CweRank>(top)));
  write_file_atomic((dir / "cwe_top.txt").string(), analytics::render_text(std::span<const analytics::CweRank>(top)));
  write_json(dir / "cwe_coverage.json", analytics::to_json(coverage));

  auto& r = cx.result.report;
  r["items"] = items.size();
  r["cases"] = stats.total.case_count;
  r["cwe_types"] = coverage.overall;
  if (!cx.config.analytics.findings.empty()) {
    auto findings = analytics::load_findings(cx.config.analytics.findings);
    auto det = analytics::detection_rate(items, metrics, findings);
    write_json(dir / "detection.json", analytics::to_json(det));
    r["detection_rate"] = det.overall;
  }
}

void eval_stage(Context& cx) {
  const auto& e = cx.config.eval;
  if (e.criteria_ratings.empty() && e.human_ratings.empty())
    throw ConfigError("eval needs eval.criteria_ratings or eval.human_ratings");
  ojson doc;
  if (!e.criteria_ratings.empty()) {
    auto table = eval::aggregate_criteria_scores(eval::RatingSet::load(e.criteria_ratings));
    doc["criteria"] = eval::to_json(table);
  }
  if (!e.human_ratings.empty()) {
    auto set = eval::RatingSet::load(e.human_ratings);
    doc["human_study"] = eval::to_json(eval::human_study_summary(set));
    try {
      doc["agreement"] = eval::to_json(eval::fleiss_kappa(eval::preference_matrix(set)));
    } catch (const Error& ex) {
      doc["agreement"] = nullptr;
      cx.error(std::string("agreement: ") + ex.what());
    }
  }
  write_json(cx.out / "eval_report.json", doc);
  cx.result.report = doc;
}

void validate_stage(Context& cx) {
  cx.require(files::kDataset, Stage::Enrich);
  std::vector<dataset::DatasetItem> items;
  ojson violations = ojson::array();
  try {
    items = dataset::read_records(cx.file(files::kDataset));
    for (const auto& v : dataset::validate_items(items))
      violations.push_back(ojson{{"code", v.code}, {"field", v.field}});
  } catch (const Error& e) {
    violations.push_back(ojson{{"code", "unreadable"}, {"field", e.what()}});
  }
  if (fs::exists(cx.file(files::kMetrics))) {
    auto metrics = dataset::read_metrics(cx.file(files::kMetrics));
    bool aligned = metrics.size() == items.size();
    for (std::size_t k = 0; aligned && k < items.size(); ++k)
      aligned = metrics[k].index == items[k].index && metrics[k].cve_id == items[k].cve_id;
    if (!aligned) violations.push_back(ojson{{"code", "metrics_misaligned"}, {"field", files::kMetrics}});
  }
  ojson doc;
  doc["items"] = items.size();
  doc["valid"] = violations.empty();
  doc["violations"] = violations;
  write_json(cx.out / "validate_report.json", doc);
  for (const auto& v : violations) cx.error(v["code"].get<std::string>() + " " + v["field"].get<std::string>());
  cx.result.report = doc;
}

void export_stage(Context& cx) {
  cx.require(files::kDataset, Stage::Enrich);
  auto items = dataset::read_records(cx.file(files::kDataset));
  auto violations = dataset::validate_items(items);
  if (!violations.empty())
    throw dataset::IntegrityError("dataset.jsonl has " + std::to_string(violations.size()) +
                                  " violations; run `reef validate`");
  std::string out = "[";
  for (std::size_t k = 0; k < items.size(); ++k) {
    out += k ? ",\n  " : "\n  ";
    out += dataset::serialize_item(items[k]);
  }
  out += items.empty() ? "]\n" : "\n]\n";
  write_file_atomic(cx.file(files::kExport).string(), out);
  cx.result.report["items"] = items.size();
}

void record_run(const Context& cx, Stage stage, const std::string& started) {
  auto path = cx.file(files::kRunMetadata);
  ojson doc = ojson::object();
  if (fs::exists(path)) {
    try {
      doc = ojson::parse(read_file(path.string()));
    } catch (const std::exception&) {
      doc = ojson::object();
    }
  }
  ojson entry;
  entry["started_at"] = started;
  entry["finished_at"] = utc_now();
  entry["exit_code"] = cx.result.exit_code;
  entry["offline"] = cx.config.offline;
  entry["errors"] = cx.result.errors.size();
  doc[std::string(stage_name(stage))] = entry;
  write_json(path, doc);
}

}  // namespace

StageResult run_stage(Stage stage, const PipelineConfig& config, Environment& env, const StageOptions& options) {
  Context cx{config, env, options, fs::path(config.output_dir), {}, nullptr, nullptr};
  auto started = utc_now();
  cx.result.report = ojson::object();
  try {
    config.validate();
    fs::create_directories(cx.out);
    switch (stage) {
      case Stage::Collect: collect(cx); break;
      case Stage::Filter: filter_stage(cx); break;
      case Stage::Enrich: enrich_stage(cx); break;
      case Stage::Analyze: analyze_stage(cx); break;
      case Stage::Eval: eval_stage(cx); break;
      case Stage::Validate: validate_stage(cx); break;
      case Stage::Export: export_stage(cx); break;
    }
    cx.result.exit_code = cx.result.errors.empty() ? kOk : kRuntime;
  } catch (const ConfigError& e) {
    cx.result.exit_code = kUsage;
    cx.error(e.what());
  } catch (const DependencyError& e) {
    cx.result.exit_code = kDependency;
    cx.error(e.what());
  } catch (const std::exception& e) {
    cx.result.exit_code = kRuntime;
    cx.error(e.what());
  }
  if (config.offline) cx.result.report["network_attempts"] = cx.guard().attempts();
  cx.result.report["errors"] = cx.result.errors;
  if (cx.result.exit_code != kUsage && cx.result.exit_code != kDependency) {
    try {
      record_run(cx, stage, started);
    } catch (const std::exception&) {
    }
  }
  return std::move(cx.result);
}

}  // namespace reef::pipeline
