#include <doctest.h>

#include "reef/filtering.hpp"

#include <random>

using namespace reef;
using namespace reef::filter;

namespace {

std::vector<CommitSummary> summaries(std::initializer_list<std::size_t> files) {
  std::vector<CommitSummary> out;
  int k = 0;
  for (auto f : files) out.push_back({"c" + std::to_string(k++), f});
  return out;
}

// Reference evaluation with plain arithmetic, kept apart from the library.
double oracle(const std::vector<CommitSummary>& cs, double alpha, std::size_t cap) {
  double s = 0;
  for (const auto& c : cs) s += 1.0 / (1.0 + alpha * (double(c.files_changed) - 1.0));
  double n = double(cs.size());
  double g = cs.size() <= cap ? 1.0 : double(cap) / n;
  return g * s / n;
}

ingest::CommitPatch patch(const std::string& sha, std::vector<std::string> paths) {
  ingest::CommitPatch p;
  p.ref.sha = sha;
  for (auto& path : paths) p.files.push_back({path, ingest::FileStatus::Modified, 1, 1, std::nullopt, "", std::nullopt});
  return p;
}

ingest::AdvisoryRecord advisory(std::optional<double> cvss) {
  ingest::AdvisoryRecord a;
  a.cve_id = "CVE-2020-0001";
  if (cvss) a.cvss = ingest::CvssScore{*cvss, "3.1"};
  return a;
}

}  // namespace

TEST_CASE("worked fix-score examples") {
  FilterConfig cfg;
  CHECK(fix_score(summaries({1}), cfg).score == doctest::Approx(1.0).epsilon(1e-12));
  auto two = fix_score(summaries({1, 3}), cfg);
  CHECK(two.score == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(two.per_commit[1].weight == doctest::Approx(2.0 / 3.0));
  CHECK(two.commit_count_factor == 1.0);
  auto ten = fix_score(summaries({1, 1, 1, 1, 1, 1, 1, 1, 1, 1}), cfg);
  CHECK(ten.commit_count_factor == doctest::Approx(0.5));
  CHECK(ten.score == doctest::Approx(0.5));
  auto sprawl = fix_score(summaries({12, 15}), cfg);
  CHECK(sprawl.per_commit[0].weight == doctest::Approx(0.26667).epsilon(1e-4));
  CHECK(sprawl.per_commit[1].weight == doctest::Approx(0.22222).epsilon(1e-4));
  CHECK(sprawl.score == doctest::Approx(0.24444).epsilon(1e-4));
  CHECK_FALSE(sprawl.pass);
  CHECK(sprawl.reasons == std::vector<Reason>{Reason::FixScoreBelowThreshold});
}

TEST_CASE("fix score errors") {
  CHECK_THROWS_AS(fix_score(std::vector<CommitSummary>{}, FilterConfig{}), NoFixCommits);
  CHECK_THROWS_AS(fix_score(summaries({0}), FilterConfig{}), Error);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(FilterConfig{}.validate());
  CHECK_THROWS_AS((FilterConfig{11.0, 0.4, 0.25, 5}.validate()), ConfigError);
  CHECK_THROWS_AS((FilterConfig{4.0, 0.0, 0.25, 5}.validate()), ConfigError);
  CHECK_THROWS_AS((FilterConfig{4.0, 1.1, 0.25, 5}.validate()), ConfigError);
  CHECK_THROWS_AS((FilterConfig{4.0, 0.4, -0.1, 5}.validate()), ConfigError);
  CHECK_THROWS_AS((FilterConfig{4.0, 0.4, 0.25, 0}.validate()), ConfigError);
  CHECK_NOTHROW((FilterConfig{10.0, 1.0, 0.0, 1}.validate()));
}

TEST_CASE("randomized fix-score properties") {
  std::mt19937_64 rng(42);
  for (int iter = 0; iter < 1000; ++iter) {
    FilterConfig cfg;
    cfg.focus_penalty = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    cfg.commit_cap = 1 + rng() % 8;
    std::vector<CommitSummary> cs;
    std::size_t n = 1 + rng() % 12;
    for (std::size_t k = 0; k < n; ++k) cs.push_back({"c" + std::to_string(k), 1 + rng() % 40});
    auto base = fix_score(cs, cfg).score;
    CHECK(base > 0.0);
    CHECK(base <= 1.0);
    CHECK(base == doctest::Approx(oracle(cs, cfg.focus_penalty, cfg.commit_cap)).epsilon(1e-12));
    CHECK(fix_score(cs, cfg).score == base);

    // More files on any one commit never raises the score.
    auto more = cs;
    more[rng() % n].files_changed += 1 + rng() % 10;
    CHECK(fix_score(more, cfg).score <= base + 1e-15);

    // Past the cap, another commit no more focused than the current mean
    // never raises the score.
    if (n >= cfg.commit_cap) {
      auto grown = cs;
      auto weakest = *std::max_element(cs.begin(), cs.end(),
                                       [](auto& a, auto& b) { return a.files_changed < b.files_changed; });
      grown.push_back({"extra", weakest.files_changed + rng() % 5});
      CHECK(fix_score(grown, cfg).score <= base + 1e-15);
    }

    // The commit-count factor never increases with n.
    auto g_n = fix_score(summaries({1}), cfg).commit_count_factor;
    for (std::size_t m = 2; m < 20; ++m) {
      std::vector<CommitSummary> ones(m, CommitSummary{"x", 1});
      auto g_m = fix_score(ones, cfg).commit_count_factor;
      CHECK(g_m <= g_n);
      g_n = g_m;
    }
  }
}

TEST_CASE("appending a focused commit to a sprawling set can raise the score") {
  // The formula averages focus, so this is expected behaviour; the cap only
  // scales the mean down.
  FilterConfig cfg;
  cfg.commit_cap = 2;
  auto before = fix_score(summaries({40, 40}), cfg).score;
  auto after = fix_score(summaries({40, 40, 1}), cfg).score;
  CHECK(after > before);
}

TEST_CASE("passes_filters examples") {
  FilterConfig cfg;
  std::vector<ingest::CommitPatch> one = {patch("a", {"src/a.c"})};
  auto ok = passes_filters(advisory(9.8), one, cfg);
  CHECK(ok.pass);
  CHECK(ok.reasons.empty());
  REQUIRE(ok.report);
  CHECK(ok.report->score == 1.0);

  auto low = passes_filters(advisory(2.1), one, cfg);
  CHECK_FALSE(low.pass);
  CHECK(low.reasons == std::vector<Reason>{Reason::CvssBelowThreshold});

  std::vector<std::string> a(12, "x.c"), b(15, "y.c");
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = "a" + std::to_string(k) + ".c";
  for (std::size_t k = 0; k < b.size(); ++k) b[k] = "b" + std::to_string(k) + ".c";
  std::vector<ingest::CommitPatch> sprawl = {patch("a", a), patch("b", b)};
  auto s = passes_filters(advisory(7.5), sprawl, cfg);
  CHECK_FALSE(s.pass);
  CHECK(s.reasons == std::vector<Reason>{Reason::FixScoreBelowThreshold});
  CHECK(s.report->score == doctest::Approx(0.2444).epsilon(1e-3));

  auto missing = passes_filters(advisory(std::nullopt), one, cfg);
  CHECK(missing.reasons == std::vector<Reason>{Reason::CvssMissing});

  auto none = passes_filters(advisory(9.0), {}, cfg);
  CHECK(none.reasons == std::vector<Reason>{Reason::NoFixCommits});
  CHECK_FALSE(none.report);

  std::vector<ingest::CommitPatch> docs = {patch("d", {"README.md", "docs/x.md"})};
  auto d = passes_filters(advisory(9.0), docs, cfg);
  CHECK(d.reasons == std::vector<Reason>{Reason::NoSourceFiles});

  // A docs-only commit still weighs in, next to a source commit.
  std::vector<ingest::CommitPatch> mixed = {patch("d", {"README.md"}), patch("s", {"a.py"})};
  auto m = passes_filters(advisory(9.0), mixed, cfg);
  CHECK(m.pass);
  CHECK(m.report->per_commit.size() == 2);

  // Commits that change nothing do not enter the score.
  std::vector<ingest::CommitPatch> empty_commit = {patch("e", {}), patch("s", {"a.py"})};
  CHECK(passes_filters(advisory(9.0), empty_commit, cfg).report->per_commit.size() == 1);
}

TEST_CASE("raising thresholds never admits a rejected advisory") {
  std::mt19937 rng(3);
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<ingest::CommitPatch> commits;
    std::size_t n = rng() % 4;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<std::string> paths;
      std::size_t files = 1 + rng() % 8;
      for (std::size_t f = 0; f < files; ++f) paths.push_back("f" + std::to_string(f) + (rng() % 3 ? ".c" : ".md"));
      commits.push_back(patch("c" + std::to_string(k), paths));
    }
    auto adv = advisory(rng() % 5 ? std::optional<double>(double(rng() % 101) / 10.0) : std::nullopt);
    FilterConfig lo;
    lo.cvss_threshold = double(rng() % 80) / 10.0;
    lo.fix_score_threshold = 0.05 + double(rng() % 50) / 100.0;
    FilterConfig hi = lo;
    hi.cvss_threshold += double(rng() % 20) / 10.0;
    hi.fix_score_threshold = std::min(1.0, hi.fix_score_threshold + double(rng() % 40) / 100.0);
    auto a = passes_filters(adv, commits, lo);
    auto b = passes_filters(adv, commits, hi);
    if (!a.pass) CHECK_FALSE(b.pass);
  }
}

TEST_CASE("decision json carries reasons and intermediates") {
  FilterConfig cfg;
  std::vector<ingest::CommitPatch> one = {patch("abc", {"src/a.c", "src/b.c"})};
  auto j = to_json(passes_filters(advisory(2.0), one, cfg));
  CHECK(j["verdict"] == "reject");
  CHECK(j["reasons"][0] == "cvss_below_threshold");
  CHECK(j["fix_score"]["per_commit"][0]["files_changed"] == 2);
  CHECK(j["fix_score"]["score"].get<double>() == doctest::Approx(0.8));
}
