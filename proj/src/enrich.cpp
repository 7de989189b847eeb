#include "reef/enrich.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>
#include <thread>

#include "reef/default_templates.hpp"
#include "reef/diffmodel.hpp"

namespace reef::enrich {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view pattern_name(PromptPattern p) noexcept {
  switch (p) {
    case PromptPattern::ZeroShot: return "zero_shot";
    case PromptPattern::OneShot: return "one_shot";
    case PromptPattern::FewShot: return "few_shot";
  }
  return "one_shot";
}

PromptPattern parse_pattern(std::string_view name) {
  for (auto p : {PromptPattern::ZeroShot, PromptPattern::OneShot, PromptPattern::FewShot})
    if (pattern_name(p) == name) return p;
  throw ConfigError("unknown prompt pattern '" + std::string(name) + "'");
}

std::string_view section_name(SectionName s) noexcept {
  switch (s) {
    case SectionName::Instructions: return "instructions";
    case SectionName::Exemplars: return "exemplars";
    case SectionName::CveContext: return "cve_context";
    case SectionName::DiffPayload: return "diff_payload";
  }
  return "instructions";
}

std::size_t estimate_tokens(std::string_view text, std::size_t chars_per_token) noexcept {
  auto cpt = std::max<std::size_t>(1, chars_per_token);
  return (text.size() + cpt - 1) / cpt;
}

std::size_t PromptText::exemplar_blocks() const noexcept {
  return static_cast<std::size_t>(std::count_if(sections.begin(), sections.end(),
                                                [](const PromptSection& s) { return s.name == SectionName::Exemplars; }));
}

const std::string& PromptText::section(SectionName name) const {
  for (const auto& s : sections)
    if (s.name == name) return s.text;
  throw Error("prompt has no " + std::string(section_name(name)) + " section");
}

std::size_t PromptText::scaffold_tokens() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sections)
    if (s.name != SectionName::DiffPayload) n += estimate_tokens(s.text, chars_per_token);
  return n;
}

void PromptText::recompute_estimate() noexcept {
  estimated_tokens = 0;
  for (const auto& s : sections) estimated_tokens += estimate_tokens(s.text, chars_per_token);
}

std::string PromptText::render() const {
  std::string out;
  for (const auto& s : sections) {
    if (s.text.empty()) continue;
    if (!out.empty()) out += "\n\n";
    out += s.text;
  }
  return out;
}

namespace {

std::string substitute(std::string tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string needle = "{{" + key + "}}";
    for (auto pos = tmpl.find(needle); pos != std::string::npos; pos = tmpl.find(needle, pos + value.size()))
      tmpl.replace(pos, needle.size(), value);
  }
  return tmpl;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

ExemplarLibrary ExemplarLibrary::load(const fs::path& path) {
  ExemplarLibrary lib;
  try {
    auto j = json::parse(read_file(path.string()));
    for (const auto& e : j) lib.items.push_back({e.at("input").get<std::string>(), e.at("output").get<std::string>()});
  } catch (const json::exception& e) {
    throw ParseError("exemplar library " + path.string() + ": " + e.what());
  }
  return lib;
}

PromptTemplates PromptTemplates::defaults() {
  return {std::string(templates::kInstructions), std::string(templates::kExemplar),
          std::string(templates::kCveContext)};
}

PromptTemplates PromptTemplates::load(const fs::path& dir) {
  auto t = defaults();
  auto maybe = [&](const char* name, std::string& slot) {
    auto p = dir / name;
    if (fs::is_regular_file(p)) slot = read_file(p.string());
  };
  maybe("instructions.txt", t.instructions);
  maybe("exemplar.txt", t.exemplar);
  maybe("cve_context.txt", t.cve_context);
  return t;
}

PromptText build_prompt(PromptPattern pattern, const ingest::CveBundle& bundle, const ExemplarLibrary& exemplars,
                        const PromptTemplates& templates, PromptOptions options) {
  std::size_t blocks = 0;
  switch (pattern) {
    case PromptPattern::ZeroShot: break;
    case PromptPattern::OneShot:
      if (exemplars.items.empty()) throw MissingExemplars();
      blocks = 1;
      break;
    case PromptPattern::FewShot:
      if (exemplars.items.size() < 2) throw MissingExemplars();
      blocks = options.few_shot_k == 0 ? exemplars.items.size() : std::clamp<std::size_t>(options.few_shot_k, 2, exemplars.items.size());
      break;
  }

  PromptText p;
  p.pattern = pattern;
  p.chars_per_token = std::max<std::size_t>(1, options.chars_per_token);
  p.sections.push_back({SectionName::Instructions, templates.instructions});
  for (std::size_t k = 0; k < blocks; ++k)
    p.sections.push_back({SectionName::Exemplars,
                          substitute(templates.exemplar, {{"index", std::to_string(k + 1)},
                                                          {"input", exemplars.items[k].input},
                                                          {"output", exemplars.items[k].output}})});

  const auto& adv = bundle.advisory;
  std::string cvss = adv.cvss ? format_score(adv.cvss->score) + " (CVSS v" + adv.cvss->version + ")" : "unknown";
  p.sections.push_back({SectionName::CveContext,
                        substitute(templates.cve_context, {{"cve_id", adv.cve_id},
                                                           {"cwes", adv.cwes.empty() ? "unknown" : join(adv.cwes, ", ")},
                                                           {"cvss", cvss},
                                                           {"description", adv.description}})});

  std::string diff;
  for (const auto& c : bundle.commits) {
    diff += "commit " + c.ref.sha + " (" + c.ref.repo_owner + "/" + c.ref.repo_name + ")\n";
    std::vector<const ingest::ChangedFile*> files;
    for (const auto& f : c.files) files.push_back(&f);
    std::stable_sort(files.begin(), files.end(), [](auto* a, auto* b) { return a->path < b->path; });
    for (const auto* f : files) {
      diff += "--- " + f->path + "\n";
      if (f->patch_text && !f->patch_text->empty()) {
        diff += *f->patch_text;
        if (diff.back() != '\n') diff += '\n';
      } else {
        diff += "(no textual diff)\n";
      }
    }
  }
  p.sections.push_back({SectionName::DiffPayload, std::move(diff)});
  p.recompute_estimate();
  return p;
}

PromptText truncate_to_budget(PromptText prompt, std::size_t budget) {
  auto scaffold = prompt.scaffold_tokens();
  if (scaffold > budget) throw BudgetTooSmall(scaffold, budget);
  prompt.recompute_estimate();
  if (prompt.estimated_tokens <= budget) return prompt;
  for (auto& s : prompt.sections) {
    if (s.name != SectionName::DiffPayload) continue;
    std::size_t max_chars = (budget - scaffold) * prompt.chars_per_token;
    // Longest prefix made of whole lines that fits.
    std::size_t keep = 0;
    for (auto nl = s.text.find('\n'); nl != std::string::npos && nl + 1 <= max_chars; nl = s.text.find('\n', nl + 1))
      keep = nl + 1;
    s.text.resize(keep);
    prompt.truncated = true;
  }
  prompt.recompute_estimate();
  return prompt;
}

// --- providers -----------------------------------------------------------------

CannedProvider::CannedProvider(fs::path dir, std::string id) : dir_(std::move(dir)), id_(std::move(id)) {}

std::string CannedProvider::complete(const CompletionRequest& request) {
  auto p = dir_ / (request.cve_id + ".txt");
  if (!fs::is_regular_file(p)) throw ProviderError("no canned response for " + request.cve_id, false);
  auto text = read_file(p.string());
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

ChatCompletionProvider::ChatCompletionProvider(std::string endpoint, std::string model, std::string token,
                                               http::Transport& transport, std::string id)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      token_(std::move(token)),
      transport_(transport),
      id_(std::move(id)) {}

std::string ChatCompletionProvider::complete(const CompletionRequest& request) {
  json body = {{"model", model_},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
               {"max_tokens", request.max_tokens}};
  http::Request req;
  req.method = "POST";
  req.url = endpoint_;
  req.content_type = "application/json";
  req.body = body.dump(-1, ' ', false, json::error_handler_t::replace);
  if (!token_.empty()) req.headers["Authorization"] = "Bearer " + token_;
  http::Response res;
  try {
    res = transport_.send(req);
  } catch (const TransportError& e) {
    throw ProviderError(e.what(), e.retriable());
  }
  if (res.status == 429 || res.status >= 500)
    throw ProviderError("provider returned HTTP " + std::to_string(res.status), true);
  if (res.status != 200) throw ProviderError("provider returned HTTP " + std::to_string(res.status), false);
  try {
    auto j = json::parse(res.body);
    if (j.contains("choices") && !j["choices"].empty()) {
      const auto& c = j["choices"][0];
      if (c.contains("message")) return c["message"].at("content").get<std::string>();
      if (c.contains("text")) return c["text"].get<std::string>();
    }
    if (j.contains("text")) return j["text"].get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed provider response: ") + e.what(), false);
  }
  throw ProviderError("provider response carries no text", false);
}

// --- explanation -------------------------------------------------------------------

void to_json(json& j, const ExplanationResult& v) {
  j = json{{"cve_id", v.cve_id},           {"llm_message", v.llm_message}, {"provider_id", v.provider_id},
           {"prompt_hash", v.prompt_hash}, {"truncated", v.truncated},     {"failed", v.failed},
           {"error", v.error}};
}

void from_json(const json& j, ExplanationResult& v) {
  j.at("cve_id").get_to(v.cve_id);
  j.at("llm_message").get_to(v.llm_message);
  j.at("provider_id").get_to(v.provider_id);
  j.at("prompt_hash").get_to(v.prompt_hash);
  j.at("truncated").get_to(v.truncated);
  j.at("failed").get_to(v.failed);
  v.error = j.value("error", std::string{});
}

PromptText prepare_prompt(const ingest::CveBundle& bundle, const EnrichConfig& config,
                          const ExemplarLibrary& exemplars, const PromptTemplates& templates) {
  return truncate_to_budget(
      build_prompt(config.pattern, bundle, exemplars, templates, {config.few_shot_k, config.chars_per_token}),
      config.max_input_tokens);
}

ExplanationResult generate_explanation(const ingest::CveBundle& bundle, LlmProvider& provider,
                                       const EnrichConfig& config, const ExemplarLibrary& exemplars,
                                       const PromptTemplates& templates) {
  const auto& cve = bundle.advisory.cve_id;
  if (bundle.commits.empty()) throw EnrichmentFailed(cve, "no fix commits");
  auto prompt = prepare_prompt(bundle, config, exemplars, templates);
  auto rendered = prompt.render();
  ExplanationResult r;
  r.cve_id = cve;
  r.provider_id = provider.id();
  r.prompt_hash = sha256_hex(rendered);
  r.truncated = prompt.truncated;

  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, config.max_attempts); ++attempt) {
    try {
      auto text = provider.complete({cve, rendered, config.max_output_tokens});
      if (trim(text).empty()) throw ProviderError("empty completion", false);
      r.llm_message = std::string(trim(text));
      return r;
    } catch (const ProviderError& e) {
      last_error = e.what();
      if (!e.transient()) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50 << std::min(attempt, 6)));
    }
  }
  throw EnrichmentFailed(cve, last_error);
}

std::set<std::string> changed_identifiers(const ingest::CveBundle& bundle) {
  static const std::regex ident(R"([A-Za-z_][A-Za-z0-9_]*)");
  static const std::set<std::string> noise = {
      "if",     "else",  "for",   "while",  "do",       "switch", "case",   "break",  "continue", "return",
      "int",    "char",  "void",  "long",   "short",    "unsigned", "signed", "const", "static",   "struct",
      "class",  "public", "private", "protected", "new", "delete", "null",  "NULL",   "nullptr",  "true",
      "false",  "True",  "False", "None",   "def",      "import", "from",   "func",   "var",      "let",
      "function", "this", "self", "throw",  "try",      "catch",  "auto",   "bool",   "double",   "float",
      "sizeof", "goto",  "and",   "or",     "not",      "in",     "is",     "package", "using",   "namespace"};
  std::set<std::string> ids;
  for (const auto& c : bundle.commits)
    for (const auto& f : c.files) {
      if (!f.patch_text) continue;
      diff::FileDiff d;
      try {
        d = diff::parse_unified_diff(*f.patch_text, f.path);
      } catch (const diff::DiffParseError&) {
        continue;
      }
      for (const auto& h : d.hunks)
        for (const auto& l : h.lines) {
          if (l.marker == diff::Marker::Context) continue;
          for (auto it = std::sregex_iterator(l.text.begin(), l.text.end(), ident); it != std::sregex_iterator(); ++it)
            if (!noise.contains(it->str())) ids.insert(it->str());
        }
    }
  return ids;
}

Traceability traceability_score(std::string_view message, const ingest::CveBundle& bundle) {
  static const std::regex ident(R"([A-Za-z_][A-Za-z0-9_]*)");
  Traceability t;
  auto changed = changed_identifiers(bundle);
  t.changed = changed.size();
  if (changed.empty()) {
    t.degenerate = true;
    return t;
  }
  std::set<std::string> mentioned;
  std::string msg(message);
  for (auto it = std::sregex_iterator(msg.begin(), msg.end(), ident); it != std::sregex_iterator(); ++it)
    if (changed.contains(it->str())) mentioned.insert(it->str());
  t.mentioned = mentioned.size();
  t.score = static_cast<double>(t.mentioned) / static_cast<double>(t.changed);
  return t;
}

void ExplanationSink::add(ExplanationResult result) {
  std::lock_guard lock(mu_);
  if (!ids_.insert(result.cve_id).second) throw DuplicateExplanation(result.cve_id);
  results_.push_back(std::move(result));
}

std::vector<ExplanationResult> ExplanationSink::results() const {
  std::lock_guard lock(mu_);
  return results_;
}

std::size_t ExplanationSink::size() const {
  std::lock_guard lock(mu_);
  return results_.size();
}

}  // namespace reef::enrich
