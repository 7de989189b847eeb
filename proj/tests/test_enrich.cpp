#include <doctest.h>
#include <httplib.h>

#include "reef/enrich.hpp"
#include "support.hpp"

#include <random>
#include <thread>

using namespace reef;
using namespace reef::enrich;
using json = nlohmann::json;

namespace {

ingest::CveBundle bundle_with(std::string cve, std::vector<std::vector<std::string>> commits_patches) {
  ingest::CveBundle b;
  b.advisory.cve_id = std::move(cve);
  b.advisory.cvss = ingest::CvssScore{7.5, "3.1"};
  b.advisory.cwes = {"CWE-787"};
  b.advisory.description = "heap overflow in the parser";
  int k = 0;
  for (auto& patches : commits_patches) {
    ingest::CommitPatch c;
    c.ref = {"o", "r", std::string(40, char('a' + k++)), "", ""};
    int f = 0;
    for (auto& p : patches) c.files.push_back({"src/f" + std::to_string(f++) + ".c", ingest::FileStatus::Modified, 1, 1, p, "", std::nullopt});
    b.commits.push_back(std::move(c));
  }
  return b;
}

ExemplarLibrary library(std::size_t n) {
  ExemplarLibrary lib;
  for (std::size_t k = 0; k < n; ++k) lib.items.push_back({"in" + std::to_string(k), "out" + std::to_string(k)});
  return lib;
}

// Counts every complete call and answers from a script.
class ScriptedProvider final : public LlmProvider {
 public:
  std::vector<std::function<std::string()>> script;
  std::size_t calls = 0;
  const std::string& id() const noexcept override { return id_; }
  std::string complete(const CompletionRequest&) override {
    auto& step = script[std::min(calls++, script.size() - 1)];
    return step();
  }

 private:
  std::string id_ = "scripted";
};

std::string random_diff(std::mt19937& rng) {
  std::string d = "@@ -1,1 +1,1 @@\n";
  std::size_t lines = rng() % 400;
  for (std::size_t k = 0; k < lines; ++k) {
    d += "+-  "[rng() % 4];
    d += std::string(rng() % 120, char('a' + rng() % 26));
    d += '\n';
  }
  return d;
}

}  // namespace

TEST_CASE("patterns insert 0, 1 or k exemplar blocks in library order") {
  auto b = bundle_with("CVE-2020-0001", {{"@@ -1 +1 @@\n-a\n+b\n"}});
  auto lib = library(4);
  CHECK(build_prompt(PromptPattern::ZeroShot, b, lib).exemplar_blocks() == 0);
  auto one = build_prompt(PromptPattern::OneShot, b, lib);
  CHECK(one.exemplar_blocks() == 1);
  CHECK(one.section(SectionName::Exemplars).find("in0") != std::string::npos);
  CHECK(build_prompt(PromptPattern::FewShot, b, lib).exemplar_blocks() == 4);
  auto three = build_prompt(PromptPattern::FewShot, b, lib, PromptTemplates::defaults(), {3, 4});
  REQUIRE(three.exemplar_blocks() == 3);
  std::vector<std::string> order;
  for (const auto& s : three.sections)
    if (s.name == SectionName::Exemplars) order.push_back(s.text);
  for (std::size_t k = 0; k < 3; ++k) CHECK(order[k].find("in" + std::to_string(k)) != std::string::npos);
  CHECK(three.sections.front().name == SectionName::Instructions);
  CHECK(three.sections.back().name == SectionName::DiffPayload);
}

TEST_CASE("prompt content carries the advisory and diffs") {
  auto b = bundle_with("CVE-2020-0001", {{"@@ -1 +1 @@\n-a\n+b\n"}});
  auto p = build_prompt(PromptPattern::ZeroShot, b, {});
  const auto& ctx = p.section(SectionName::CveContext);
  CHECK(ctx.find("CVE-2020-0001") != std::string::npos);
  CHECK(ctx.find("CWE-787") != std::string::npos);
  CHECK(ctx.find("7.5") != std::string::npos);
  CHECK(p.section(SectionName::DiffPayload).find("+b\n") != std::string::npos);
  CHECK(p.estimated_tokens == p.scaffold_tokens() + estimate_tokens(p.section(SectionName::DiffPayload)));
  CHECK(build_prompt(PromptPattern::OneShot, b, library(1)) == build_prompt(PromptPattern::OneShot, b, library(1)));
}

TEST_CASE("missing exemplars and small budgets are errors") {
  auto b = bundle_with("CVE-2020-0001", {{"@@ -1 +1 @@\n-a\n+b\n"}});
  CHECK_THROWS_AS(build_prompt(PromptPattern::OneShot, b, {}), MissingExemplars);
  CHECK_THROWS_AS(build_prompt(PromptPattern::FewShot, b, library(1)), MissingExemplars);
  CHECK_NOTHROW(build_prompt(PromptPattern::ZeroShot, b, {}));
  auto p = build_prompt(PromptPattern::ZeroShot, b, {});
  CHECK_THROWS_AS(truncate_to_budget(p, 3), BudgetTooSmall);
}

TEST_CASE("token estimate is a ceiling over characters") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("abc") == 1);
  CHECK(estimate_tokens("abcd") == 1);
  CHECK(estimate_tokens("abcde") == 2);
  CHECK(estimate_tokens("abcdef", 3) == 2);
}

TEST_CASE("truncation: budget held, idempotent, scaffold untouched over random prompts") {
  std::mt19937 rng(11);
  auto lib = library(2);
  std::size_t truncated = 0;
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<std::string> files;
    for (std::size_t f = 0, n = 1 + rng() % 3; f < n; ++f) files.push_back(random_diff(rng));
    auto b = bundle_with("CVE-2021-" + std::to_string(1000 + iter), {files});
    auto pattern = std::array{PromptPattern::ZeroShot, PromptPattern::OneShot, PromptPattern::FewShot}[rng() % 3];
    auto full = build_prompt(pattern, b, lib);
    auto cut = truncate_to_budget(full, 3072);
    CHECK(cut.estimated_tokens <= 3072);
    CHECK(truncate_to_budget(cut, 3072) == cut);
    for (std::size_t k = 0; k + 1 < full.sections.size(); ++k) CHECK(cut.sections[k] == full.sections[k]);
    const auto& whole = full.section(SectionName::DiffPayload);
    const auto& kept = cut.section(SectionName::DiffPayload);
    CHECK(whole.compare(0, kept.size(), kept) == 0);
    if (!kept.empty()) CHECK(kept.back() == '\n');
    CHECK(cut.truncated == (kept.size() < whole.size()));
    truncated += cut.truncated;
  }
  CHECK(truncated > 20);
}

TEST_CASE("canned provider reads per-cve files") {
  test::TempDir dir;
  write_file_atomic((dir / "CVE-2020-0001.txt").string(), "Summary: x\n\n");
  CannedProvider p(dir.path());
  CHECK(p.complete({"CVE-2020-0001", "prompt", 10}) == "Summary: x");
  CHECK_THROWS_AS(p.complete({"CVE-2020-0002", "", 10}), ProviderError);
}

TEST_CASE("one explanation per cve across commits and files") {
  auto b = bundle_with("CVE-2020-0001", {{"@@ -1 +1 @@\n-a\n+b\n", "@@ -2 +2 @@\n-c\n+d\n"},
                                         {"@@ -1 +1 @@\n-e\n+f\n", "@@ -1 +1 @@\n-g\n+h\n", "@@ -1 +1 @@\n-i\n+j\n"},
                                         {"@@ -1 +1 @@\n-k\n+l\n", "@@ -1 +1 @@\n-m\n+n\n"}});
  ScriptedProvider p;
  p.script = {[] { return std::string("  explained  "); }};
  auto r = generate_explanation(b, p, EnrichConfig{}, library(1));
  CHECK(p.calls == 1);
  CHECK(r.llm_message == "explained");
  CHECK(r.provider_id == "scripted");
  CHECK(r.prompt_hash == sha256_hex(prepare_prompt(b, EnrichConfig{}, library(1)).render()));
  CHECK_FALSE(r.failed);
}

TEST_CASE("transient provider errors are retried; persistent ones fail the cve") {
  auto b = bundle_with("CVE-2020-0001", {{"@@ -1 +1 @@\n-a\n+b\n"}});
  ScriptedProvider flaky;
  flaky.script = {[]() -> std::string { throw ProviderError("busy", true); }, [] { return std::string("ok"); }};
  CHECK(generate_explanation(b, flaky, EnrichConfig{}, library(1)).llm_message == "ok");
  CHECK(flaky.calls == 2);

  ScriptedProvider broken;
  broken.script = {[]() -> std::string { throw ProviderError("busy", true); }};
  EnrichConfig cfg;
  cfg.max_attempts = 3;
  CHECK_THROWS_AS(generate_explanation(b, broken, cfg, library(1)), EnrichmentFailed);
  CHECK(broken.calls == 3);

  ScriptedProvider refused;
  refused.script = {[]() -> std::string { throw ProviderError("bad request", false); }};
  CHECK_THROWS_AS(generate_explanation(b, refused, cfg, library(1)), EnrichmentFailed);
  CHECK(refused.calls == 1);

  ScriptedProvider blank;
  blank.script = {[] { return std::string(" \n"); }};
  CHECK_THROWS_AS(generate_explanation(b, blank, cfg, library(1)), EnrichmentFailed);

  auto no_commits = bundle_with("CVE-2020-0002", {});
  CHECK_THROWS_AS(generate_explanation(no_commits, blank, cfg, library(1)), EnrichmentFailed);
}

TEST_CASE("chat provider against a local server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
    if (++hits == 1) {
      res.status = 503;
      return;
    }
    auto body = json::parse(req.body);
    CHECK(body["model"] == "m1");
    CHECK(body["max_tokens"] == 256);
    CHECK(req.get_header_value("Authorization") == "Bearer k");
    json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "Summary: fixed."}}}}}}};
    res.set_content(out.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  http::NetworkTransport transport(std::chrono::seconds(5));
  ChatCompletionProvider chat("http://127.0.0.1:" + std::to_string(port) + "/v1/chat", "m1", "k", transport);
  auto b = bundle_with("CVE-2020-0001", {{"@@ -1 +1 @@\n-a\n+b\n"}});
  auto r = generate_explanation(b, chat, EnrichConfig{}, library(1));
  CHECK(r.llm_message == "Summary: fixed.");
  CHECK(hits == 2);

  ChatCompletionProvider wrong("http://127.0.0.1:" + std::to_string(port) + "/nope", "m1", "k", transport);
  CHECK_THROWS_AS(wrong.complete({"CVE-2020-0001", "p", 10}), ProviderError);

  server.stop();
  th.join();
}

TEST_CASE("traceability") {
  auto b = bundle_with("CVE-2020-0001", {{"@@ -1,2 +1,2 @@\n keep_me\n-old_len = read(buf);\n+checked_len = read(buf);\n"}});
  auto ids = changed_identifiers(b);
  CHECK(ids == std::set<std::string>{"buf", "checked_len", "old_len", "read"});
  CHECK(traceability_score("nothing relevant", b).score == 0.0);
  auto all = traceability_score("read into buf; old_len became checked_len", b);
  CHECK(all.score == 1.0);
  CHECK(all.mentioned == 4);
  CHECK(traceability_score("buf and read", b).score == doctest::Approx(0.5));
  CHECK(traceability_score("keep_me", b).score == 0.0);  // context lines do not count

  auto empty = bundle_with("CVE-2020-0002", {{"@@ -1 +1 @@\n-if\n+return\n"}});
  auto d = traceability_score("anything", empty);
  CHECK(d.degenerate);
  CHECK(d.score == 0.0);
}

TEST_CASE("explanation sink rejects a second result for a cve") {
  ExplanationSink sink;
  sink.add({"CVE-2020-0001", "a", "p", "h", false, false, ""});
  sink.add({"CVE-2020-0002", "b", "p", "h", false, false, ""});
  CHECK_THROWS_AS(sink.add({"CVE-2020-0001", "c", "p", "h", false, false, ""}), DuplicateExplanation);
  CHECK(sink.size() == 2);
  CHECK(sink.results()[1].cve_id == "CVE-2020-0002");
}

TEST_CASE("explanation json round trip and pattern names") {
  ExplanationResult r{"CVE-2020-0001", "msg", "canned", "abc", true, false, ""};
  json j = r;
  CHECK(j.get<ExplanationResult>() == r);
  CHECK(parse_pattern("few_shot") == PromptPattern::FewShot);
  CHECK_THROWS_AS(parse_pattern("two_shot"), ConfigError);
}

TEST_CASE("templates load overrides from a directory") {
  test::TempDir dir;
  write_file_atomic((dir / "instructions.txt").string(), "Explain briefly.");
  auto t = PromptTemplates::load(dir.path());
  CHECK(t.instructions == "Explain briefly.");
  CHECK(t.exemplar == PromptTemplates::defaults().exemplar);
  auto lib = ExemplarLibrary::load(test::fixtures() / "corpus/exemplars.json");
  CHECK(lib.items.size() == 2);
}
