#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "reef/http.hpp"
#include "reef/ingest.hpp"

namespace reef::enrich {

enum class PromptPattern { ZeroShot, OneShot, FewShot };

std::string_view pattern_name(PromptPattern p) noexcept;
PromptPattern parse_pattern(std::string_view name);

enum class SectionName { Instructions, Exemplars, CveContext, DiffPayload };

std::string_view section_name(SectionName s) noexcept;

struct PromptSection {
  SectionName name;
  std::string text;

  bool operator==(const PromptSection&) const = default;
};

std::size_t estimate_tokens(std::string_view text, std::size_t chars_per_token = 4) noexcept;

// Sections in order: instructions, one `Exemplars` section per exemplar block,
// cve_context, diff_payload.
struct PromptText {
  PromptPattern pattern = PromptPattern::OneShot;
  std::vector<PromptSection> sections;
  std::size_t chars_per_token = 4;
  std::size_t estimated_tokens = 0;
  bool truncated = false;

  std::size_t exemplar_blocks() const noexcept;
  const std::string& section(SectionName name) const;
  // Tokens of everything except the diff payload.
  std::size_t scaffold_tokens() const noexcept;
  void recompute_estimate() noexcept;
  std::string render() const;

  bool operator==(const PromptText&) const = default;
};

struct Exemplar {
  std::string input;
  std::string output;
};

// Human-authored worked examples, kept in file order.
struct ExemplarLibrary {
  std::vector<Exemplar> items;

  // JSON array of {"input": ..., "output": ...}.
  static ExemplarLibrary load(const std::filesystem::path& path);
};

// Editable wording; `{{name}}` placeholders are substituted.
struct PromptTemplates {
  std::string instructions;
  std::string exemplar;     // {{index}}, {{input}}, {{output}}
  std::string cve_context;  // {{cve_id}}, {{cwes}}, {{cvss}}, {{description}}

  static PromptTemplates defaults();
  // Files instructions.txt, exemplar.txt, cve_context.txt; missing ones keep defaults.
  static PromptTemplates load(const std::filesystem::path& dir);
};

class MissingExemplars : public Error {
 public:
  MissingExemplars() : Error("one-shot and few-shot prompts need a non-empty exemplar library") {}
};

class BudgetTooSmall : public Error {
 public:
  BudgetTooSmall(std::size_t scaffold, std::size_t budget)
      : Error("prompt scaffold needs " + std::to_string(scaffold) + " tokens, budget is " + std::to_string(budget)) {}
};

struct PromptOptions {
  std::size_t few_shot_k = 0;  // 0: the whole library
  std::size_t chars_per_token = 4;
};

PromptText build_prompt(PromptPattern pattern, const ingest::CveBundle& bundle, const ExemplarLibrary& exemplars,
                        const PromptTemplates& templates = PromptTemplates::defaults(), PromptOptions options = {});

// Drops whole trailing lines of the diff payload until the estimate fits.
PromptText truncate_to_budget(PromptText prompt, std::size_t budget);

// --- providers -----------------------------------------------------------------

struct CompletionRequest {
  std::string cve_id;
  std::string prompt;
  std::size_t max_tokens = 256;
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool transient) : Error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual const std::string& id() const noexcept = 0;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

// Replays `<dir>/<cve_id>.txt`.
class CannedProvider final : public LlmProvider {
 public:
  explicit CannedProvider(std::filesystem::path dir, std::string id = "canned");
  const std::string& id() const noexcept override { return id_; }
  std::string complete(const CompletionRequest& request) override;

 private:
  std::filesystem::path dir_;
  std::string id_;
};

// Chat-completion style endpoint: POST {model, messages, max_tokens}.
class ChatCompletionProvider final : public LlmProvider {
 public:
  ChatCompletionProvider(std::string endpoint, std::string model, std::string token, http::Transport& transport,
                         std::string id = "chat");
  const std::string& id() const noexcept override { return id_; }
  std::string complete(const CompletionRequest& request) override;

 private:
  std::string endpoint_;
  std::string model_;
  std::string token_;
  http::Transport& transport_;
  std::string id_;
};

// --- explanation -----------------------------------------------------------------

struct EnrichConfig {
  PromptPattern pattern = PromptPattern::OneShot;
  std::size_t max_output_tokens = 256;
  std::size_t max_input_tokens = 3072;
  std::size_t chars_per_token = 4;
  std::size_t few_shot_k = 0;
  int max_attempts = 3;
};

struct ExplanationResult {
  std::string cve_id;
  std::string llm_message;
  std::string provider_id;
  std::string prompt_hash;
  bool truncated = false;
  bool failed = false;
  std::string error;

  bool operator==(const ExplanationResult&) const = default;
};

void to_json(nlohmann::json& j, const ExplanationResult& v);
void from_json(const nlohmann::json& j, ExplanationResult& v);

class EnrichmentFailed : public Error {
 public:
  EnrichmentFailed(const std::string& cve_id, const std::string& why)
      : Error("enrichment failed for " + cve_id + ": " + why), cve_id_(cve_id) {}
  const std::string& cve_id() const noexcept { return cve_id_; }

 private:
  std::string cve_id_;
};

// The exact prompt generate_explanation sends; its rendered sha256 is the prompt_hash.
PromptText prepare_prompt(const ingest::CveBundle& bundle, const EnrichConfig& config,
                          const ExemplarLibrary& exemplars,
                          const PromptTemplates& templates = PromptTemplates::defaults());

// One explanation for the whole CVE, independent of its commit and file count.
ExplanationResult generate_explanation(const ingest::CveBundle& bundle, LlmProvider& provider,
                                       const EnrichConfig& config, const ExemplarLibrary& exemplars,
                                       const PromptTemplates& templates = PromptTemplates::defaults());

struct Traceability {
  double score = 0.0;
  bool degenerate = false;  // no changed identifiers
  std::size_t mentioned = 0;
  std::size_t changed = 0;
};

// Identifiers on added/deleted diff lines that the message names.
std::set<std::string> changed_identifiers(const ingest::CveBundle& bundle);
Traceability traceability_score(std::string_view message, const ingest::CveBundle& bundle);

class DuplicateExplanation : public Error {
 public:
  explicit DuplicateExplanation(const std::string& cve_id) : Error("second explanation for " + cve_id) {}
};

// Single-writer collection keyed by cve_id.
class ExplanationSink {
 public:
  void add(ExplanationResult result);
  std::vector<ExplanationResult> results() const;  // insertion order
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<ExplanationResult> results_;
  std::set<std::string> ids_;
};

}  // namespace reef::enrich
