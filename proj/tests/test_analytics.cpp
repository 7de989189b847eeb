#include <doctest.h>

#include "reef/analytics.hpp"
#include "reference_rows.hpp"

#include <random>

using namespace reef;
using namespace reef::analytics;

namespace {

struct Fixture {
  std::vector<DatasetItem> items;
  std::vector<ItemMetrics> metrics;

  void add(const std::string& cve, const std::string& lang, const std::string& path, std::size_t units,
           std::size_t col, std::vector<std::string> cwes = {}, std::string origin = "a reasonably long message",
           std::string generated = "generated", std::vector<std::pair<std::size_t, std::size_t>> locs = {}) {
    DatasetItem it;
    it.index = items.size();
    it.cve_id = cve;
    it.language = lang;
    it.cwes = std::move(cwes);
    it.origin_message = std::move(origin);
    it.llm_message = std::move(generated);
    items.push_back(it);
    metrics.push_back({it.index, cve, "o/r", path, col, units, std::move(locs)});
  }
};

}  // namespace

TEST_CASE("reference language rows reproduce the corpus total row") {
  auto rows = test::reference_stats_rows();
  auto t = aggregate_total(rows);
  CHECK(t.case_count == 4466);
  CHECK(t.func_count == 30987);
  CHECK(std::abs(t.avg_diff_files - 4.54) <= 0.01);
  CHECK(std::abs(t.avg_patch - 9.00) <= 0.01);
  CHECK(std::abs(t.avg_col - 155.30) <= 0.01);
}

TEST_CASE("reference message rows reproduce the message total row") {
  auto t = aggregate_total(test::reference_message_rows());
  CHECK(t.case_count == 4466);
  CHECK(t.lcmsg_count == 300);
  CHECK(std::abs(t.avg_original - 206.13) <= 0.01);
  CHECK(std::abs(t.avg_generated - 397.08) <= 0.01);
  CHECK(std::abs(t.median_original - 98.86) <= 0.01);
  CHECK(std::abs(t.median_generated - 356.57) <= 0.01);
}

TEST_CASE("per-language stats on a hand-computed fixture") {
  Fixture f;
  f.add("CVE-2020-0001", "C", "a.c", 1, 4);
  f.add("CVE-2020-0001", "C", "b.c", 2, 6);
  f.add("CVE-2020-0002", "C", "c.c", 1, 2);
  f.add("CVE-2020-0003", "Python", "x.py", 2, 10);
  f.add("CVE-2020-0003", "Python", "y.py", 2, 20);
  f.add("CVE-2020-0003", "Python", "z.py", 1, 30);
  auto t = per_language_stats(f.items, f.metrics);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].language == "C");
  CHECK(t.rows[0].case_count == 2);
  CHECK(t.rows[0].func_count == 4);
  CHECK(t.rows[0].avg_diff_files == 1.5);
  CHECK(t.rows[0].avg_patch == 2.0);
  CHECK(t.rows[0].avg_col == 6.0);
  CHECK(t.rows[1].language == "Python");
  CHECK(t.rows[1].avg_diff_files == 3.0);
  CHECK(t.rows[1].avg_patch == 5.0);
  CHECK(t.rows[1].avg_col == 60.0);
  CHECK(t.total.case_count == 3);
  CHECK(t.total.func_count == 9);
  CHECK(t.total.avg_diff_files == 2.25);
  CHECK(t.total.avg_patch == 3.5);
  CHECK(t.total.avg_col == 33.0);
  CHECK(to_json(t)["func_count_method"] == "approximate");
  CHECK(render_text(t).find("Python") != std::string::npos);

  auto empty = per_language_stats({}, {});
  CHECK(empty.rows.empty());
  CHECK(empty.total.case_count == 0);
}

TEST_CASE("statistics ignore item order") {
  Fixture f;
  f.add("CVE-2020-0001", "C", "a.c", 1, 4);
  f.add("CVE-2020-0002", "Go", "m.go", 3, 9);
  f.add("CVE-2020-0001", "C", "b.c", 2, 6);
  auto items = f.items;
  auto metrics = f.metrics;
  std::reverse(items.begin(), items.end());
  std::reverse(metrics.begin(), metrics.end());
  CHECK(to_json(per_language_stats(items, metrics)) == to_json(per_language_stats(f.items, f.metrics)));
  CHECK(to_json(per_language_stats(f.items, f.metrics)) == to_json(per_language_stats(f.items, f.metrics)));
}

TEST_CASE("case language is a plurality vote with table-order ties") {
  using L = Language;
  CHECK(attribute_language(std::vector<L>{L::C, L::Python, L::Python}) == L::Python);
  CHECK(attribute_language(std::vector<L>{L::JS, L::CSharp}) == L::JS);
  CHECK(attribute_language(std::vector<L>{L::C, L::Cpp}) == L::Cpp);
  CHECK(attribute_language(std::vector<L>{L::Go, L::Java}) == L::Java);
  CHECK(attribute_language(std::vector<L>{L::Unknown}) == L::Unknown);
  CHECK(attribute_language(std::vector<L>{}) == L::Unknown);
}

TEST_CASE("cwe coverage") {
  CHECK(cwe_coverage({}).overall == 0);
  Fixture f;
  f.add("CVE-2020-0001", "Java", "A.java", 1, 1, {"CWE-79", "NVD-CWE-noinfo"});
  f.add("CVE-2020-0001", "Python", "a.py", 1, 1, {"CWE-79", "NVD-CWE-noinfo"});
  f.add("CVE-2020-0002", "Python", "b.py", 1, 1, {"CWE-125"});
  f.add("CVE-2020-0003", "Python", "c.py", 1, 1, {"CWE-79"});
  auto c = cwe_coverage(f.items);
  CHECK(c.overall == 2);
  CHECK(c.per_language["Java"] == 1);
  CHECK(c.per_language["Python"] == 2);
}

TEST_CASE("top-k cwe ranking") {
  Fixture f;
  std::size_t n = 0;
  auto add_cases = [&](const std::string& cwe, int count) {
    for (int k = 0; k < count; ++k) f.add("CVE-2020-" + std::to_string(1000 + n++), "C", "a.c", 1, 1, {cwe});
  };
  add_cases("CWE-79", 5);
  add_cases("CWE-125", 3);
  add_cases("CWE-20", 3);
  add_cases("CWE-787", 1);
  auto top = top_k_cwe(f.items, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].cwe == "CWE-79");
  CHECK(top[1].cwe == "CWE-20");
  CHECK(top[2].cwe == "CWE-125");
  CHECK(top[0].proportion == doctest::Approx(5.0 / 12.0));
  CHECK(top_k_cwe(f.items, 100).size() == 4);
  CHECK(top_k_cwe({}, 5).empty());
  CHECK_THROWS(top_k_cwe(f.items, 0));
}

TEST_CASE("top-k is a prefix of top-(k+1) on random data") {
  std::mt19937 rng(17);
  for (int iter = 0; iter < 100; ++iter) {
    Fixture f;
    for (std::size_t k = 0, n = rng() % 60; k < n; ++k) {
      std::vector<std::string> cwes;
      for (std::size_t c = 0, m = rng() % 3; c < m; ++c) cwes.push_back("CWE-" + std::to_string(1 + rng() % 15));
      f.add("CVE-2020-" + std::to_string(1000 + rng() % 40), "C", "a.c", 1, 1, cwes);
    }
    for (std::size_t k = 1; k < 16; ++k) {
      auto a = top_k_cwe(f.items, k);
      auto b = top_k_cwe(f.items, k + 1);
      REQUIRE(a.size() <= b.size());
      CHECK(std::equal(a.begin(), a.end(), b.begin()));
    }
  }
}

TEST_CASE("low-quality messages") {
  std::vector<std::string> paths = {"src/parser.c"};
  CHECK(is_low_quality("fix", paths));
  CHECK(is_low_quality("   short but padded        ", paths));
  CHECK(is_low_quality("Merge pull request #12 from a/b with a long tail", paths));
  CHECK(is_low_quality("Update parser.c", paths));
  CHECK_FALSE(is_low_quality("Update parser.c to bound the header length", paths));
  CHECK_FALSE(is_low_quality("Reject oversized headers in the parser", paths));
  LowQualityRules rules;
  rules.autofill_prefixes.push_back("Automated");
  CHECK(is_low_quality("Automated change produced by a bot", paths, rules));
}

TEST_CASE("message stats on lengths 10, 30 and 50") {
  Fixture f;
  f.add("CVE-2020-0001", "C", "a.c", 1, 1, {}, std::string(10, 'x'), std::string(100, 'g'));
  f.add("CVE-2020-0002", "C", "b.c", 1, 1, {}, "Merge branch 'fix' into master", std::string(200, 'g'));
  f.add("CVE-2020-0003", "C", "c.c", 1, 1, {}, std::string(50, 'y'), std::string(300, 'g'));
  REQUIRE(f.items[1].origin_message.size() == 30);
  auto t = message_stats(f.items, f.metrics);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].lcmsg_count == 2);
  CHECK(t.rows[0].avg_original == 30.0);
  CHECK(t.rows[0].median_original == 30.0);
  CHECK(t.rows[0].avg_generated == 200.0);
  CHECK(t.total.lcmsg_count == 2);

  CHECK(lower_median({4, 1, 3, 2}) == 2.0);
  CHECK(lower_median({}) == 0.0);
  auto empty = message_stats({}, {});
  CHECK(empty.rows.empty());
  CHECK(empty.total.lcmsg_count == 0);
}

TEST_CASE("message lengths count characters, not bytes") {
  Fixture f;
  f.add("CVE-2020-0001", "C", "a.c", 1, 1, {}, "caf\xc3\xa9 caf\xc3\xa9 caf\xc3\xa9 caf\xc3\xa9", "\xe2\x82\xac");
  auto t = message_stats(f.items, f.metrics);
  CHECK(t.rows[0].avg_original == 19.0);
  CHECK(t.rows[0].lcmsg_count == 1);
  CHECK(t.rows[0].avg_generated == 1.0);
}

TEST_CASE("detection: one of three items overlapped") {
  Fixture f;
  f.add("CVE-2020-0001", "C", "src/a.c", 1, 1, {}, "m", "g", {{10, 3}});
  f.add("CVE-2020-0001", "C", "src/b.c", 1, 1, {}, "m", "g", {{20, 2}});
  f.add("CVE-2020-0002", "Python", "x.py", 1, 1, {}, "m", "g", {{5, 1}});
  FindingsReport none;
  CHECK(detection_rate(f.items, f.metrics, none).overall == 0.0);

  FindingsReport one;
  one.findings.push_back({"src/a.c", 12, 14, "r1"});
  one.findings.push_back({"src/b.c", 22, 30, "adjacent"});  // 20..21 is the range
  one.findings.push_back({"elsewhere.c", 1, 100, "r3"});
  auto d = detection_rate(f.items, f.metrics, one);
  CHECK(d.detected_items == 1);
  CHECK(std::abs(d.overall * 100.0 - 33.33) <= 0.01);
  CHECK(d.per_language["C"] == 0.5);
  CHECK(d.per_language["Python"] == 0.0);
  CHECK(d.per_cve == 0.5);
  CHECK(d.unresolved_findings == 1);
  CHECK(d.non_overlapping_findings == 1);

  FindingsReport before;
  before.findings.push_back({"src/b.c", 1, 19, "x"});
  CHECK(detection_rate(f.items, f.metrics, before).detected_items == 0);
  FindingsReport repo_prefixed;
  repo_prefixed.findings.push_back({"o/r/x.py", 5, 5, "x"});
  CHECK(detection_rate(f.items, f.metrics, repo_prefixed).detected_items == 1);
}

TEST_CASE("pure insertions anchor on their start line") {
  Fixture f;
  f.add("CVE-2020-0001", "C", "a.c", 1, 1, {}, "m", "g", {{7, 0}});
  FindingsReport r;
  r.findings.push_back({"a.c", 7, 7, "x"});
  CHECK(detection_rate(f.items, f.metrics, r).detected_items == 1);
  r.findings[0] = {"a.c", 8, 9, "x"};
  CHECK(detection_rate(f.items, f.metrics, r).detected_items == 0);
}

TEST_CASE("adding findings never lowers the detection rate") {
  std::mt19937 rng(23);
  for (int iter = 0; iter < 100; ++iter) {
    Fixture f;
    for (std::size_t k = 0, n = 1 + rng() % 10; k < n; ++k) {
      std::vector<std::pair<std::size_t, std::size_t>> locs;
      for (std::size_t h = 0, m = rng() % 3; h < m; ++h) locs.emplace_back(1 + rng() % 80, rng() % 6);
      f.add("CVE-2020-" + std::to_string(1000 + rng() % 4), "C", "f" + std::to_string(rng() % 4) + ".c", 1, 1, {},
            "m", "g", locs);
    }
    FindingsReport r;
    double last = 0.0;
    for (int step = 0; step < 20; ++step) {
      std::size_t s = 1 + rng() % 90;
      r.findings.push_back({"f" + std::to_string(rng() % 5) + ".c", s, s + rng() % 4, "x"});
      auto d = detection_rate(f.items, f.metrics, r);
      CHECK(d.overall >= last);
      CHECK(d.overall <= 1.0);
      last = d.overall;
    }
  }
}

TEST_CASE("findings import: SARIF and native results") {
  auto sarif = nlohmann::json::parse(R"({"version": "2.1.0", "runs": [{"results": [{"ruleId": "c.overflow",
      "locations": [{"physicalLocation": {"artifactLocation": {"uri": "file://./src/a.c"},
                                          "region": {"startLine": 9, "endLine": 4}}}]}]}]})");
  auto r = parse_findings(sarif);
  REQUIRE(r.findings.size() == 1);
  CHECK(r.findings[0].path == "src/a.c");
  CHECK(r.findings[0].start_line == 4);
  CHECK(r.findings[0].end_line == 9);
  CHECK(r.findings[0].rule_id == "c.overflow");

  nlohmann::json native = {{"results", {{{"check_id", "py.sqli"}, {"path", "app/x.py"}, {"start", {{"line", 3}}}}}}};
  auto n = parse_findings(native);
  REQUIRE(n.findings.size() == 1);
  CHECK(n.findings[0].end_line == 3);
  CHECK_THROWS_AS(parse_findings(nlohmann::json::object()), ParseError);
  CHECK_THROWS_AS(parse_findings(nlohmann::json{{"results", {{{"path", 1}}}}}), ParseError);
}
