#include "reef/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace reef::eval {

using ojson = nlohmann::ordered_json;

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(sep, pos);
    out.emplace_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::optional<double> parse_score(const std::string& s, std::size_t lineno) {
  if (s.empty() || s == "NA" || s == "na" || s == "-") return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("not a score: '" + s + "'", lineno);
  }
}

bool parse_flag(const std::string& s, std::size_t lineno) {
  auto v = to_lower(s);
  if (v.empty() || v == "0" || v == "false" || v == "no") return false;
  if (v == "1" || v == "true" || v == "yes") return true;
  throw ParseError("not a flag: '" + s + "'", lineno);
}

std::string cell(const std::string& rater, const std::string& item, const std::string& key) {
  return rater + "/" + item + "/" + key;
}

// Raters with a wrong or missing answer on any sanity-check item.
std::set<std::string> failing_raters(const RatingSet& set) {
  std::set<std::string> failed;
  for (const auto& r : set.ratings) {
    if (!r.is_sanity_check) continue;
    if (!r.expected) throw Error("sanity-check item " + r.item + " has no expected answer");
    if (!r.score || *r.score != *r.expected) failed.insert(r.rater);
  }
  return failed;
}

struct Pair {
  std::optional<double> original, generated;
};

// (rater, item) -> scores over included raters and real items.
std::map<std::pair<std::string, std::string>, Pair> study_pairs(const RatingSet& set,
                                                                std::vector<std::string>& excluded) {
  auto failed = failing_raters(set);
  std::set<std::string> raters;
  for (const auto& r : set.ratings) raters.insert(r.rater);
  excluded.assign(failed.begin(), failed.end());
  if (!raters.empty() && failed.size() == raters.size()) throw NoValidRaters();

  std::map<std::pair<std::string, std::string>, Pair> pairs;
  for (const auto& r : set.ratings) {
    if (r.is_sanity_check || failed.contains(r.rater)) continue;
    if (r.key != "original" && r.key != "generated") continue;
    if (r.score && (*r.score < 1.0 || *r.score > 5.0 || std::floor(*r.score) != *r.score))
      throw Error("human-study score outside 1..5 at " + cell(r.rater, r.item, r.key));
    auto& p = pairs[{r.rater, r.item}];
    (r.key == "original" ? p.original : p.generated) = r.score;
  }
  std::vector<std::string> missing;
  for (const auto& [key, p] : pairs) {
    if (!p.original) missing.push_back(cell(key.first, key.second, "original"));
    if (!p.generated) missing.push_back(cell(key.first, key.second, "generated"));
  }
  if (!missing.empty()) throw IncompleteRatings(std::move(missing));
  return pairs;
}

}  // namespace

IncompleteRatings::IncompleteRatings(std::vector<std::string> cells)
    : Error([&] {
        std::string s = "missing rating cells:";
        for (const auto& c : cells) s += " " + c;
        return s;
      }()),
      cells_(std::move(cells)) {}

RatingSet RatingSet::parse(std::string_view text) {
  RatingSet set;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  char sep = ',';
  std::map<std::string, std::size_t> col;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (col.empty()) {
      sep = line.find('\t') != std::string::npos ? '\t' : ',';
      auto names = split(line, sep);
      for (std::size_t k = 0; k < names.size(); ++k) col[names[k]] = k;
      for (auto need : {"rater_id", "item_id", "variant_or_criterion", "score"})
        if (!col.contains(need)) throw ParseError(std::string("ratings header lacks column '") + need + "'", lineno);
      continue;
    }
    auto f = split(line, sep);
    auto get = [&](const char* name) -> std::string {
      auto it = col.find(name);
      return it == col.end() || it->second >= f.size() ? std::string{} : f[it->second];
    };
    Rating r;
    r.rater = get("rater_id");
    r.item = get("item_id");
    r.key = get("variant_or_criterion");
    if (r.rater.empty() || r.item.empty() || r.key.empty()) throw ParseError("rating row lacks an identifier", lineno);
    r.score = parse_score(get("score"), lineno);
    r.is_sanity_check = parse_flag(get("is_sc"), lineno);
    r.expected = parse_score(get("expected"), lineno);
    set.ratings.push_back(std::move(r));
  }
  if (col.empty()) throw ParseError("ratings file has no header");
  return set;
}

RatingSet RatingSet::load(const std::string& path) {
  try {
    return parse(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

double round_half_up(double value, int digits) {
  double scale = std::pow(10.0, digits);
  return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

CriteriaTable aggregate_criteria_scores(const RatingSet& ratings) {
  auto index_of = [](auto& names, std::string_view v) -> std::optional<std::size_t> {
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == v) return k;
    return std::nullopt;
  };
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::optional<double>>> cells;
  for (const auto& r : ratings.ratings) {
    auto slash = r.key.find('/');
    if (slash == std::string::npos) continue;
    auto p = index_of(kPatterns, std::string_view(r.key).substr(0, slash));
    auto c = index_of(kCriteria, std::string_view(r.key).substr(slash + 1));
    if (!p || !c) throw Error("unknown pattern/criterion '" + r.key + "'");
    if (r.score && (*r.score < 0.0 || *r.score > 1.0))
      throw Error("criterion score outside [0, 1] at " + cell(r.rater, r.item, r.key));
    cells[{r.rater, r.item}][r.key] = r.score;
  }
  std::array<std::array<double, 3>, 3> sum{};
  std::size_t n = 0;
  std::vector<std::string> missing;
  for (const auto& [who, scores] : cells) {
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t c = 0; c < 3; ++c) {
        auto key = std::string(kPatterns[p]) + "/" + std::string(kCriteria[c]);
        auto it = scores.find(key);
        if (it == scores.end() || !it->second) missing.push_back(cell(who.first, who.second, key));
        else sum[p][c] += *it->second;
      }
    ++n;
  }
  if (n == 0) missing.push_back("no prompt-pattern ratings");
  if (!missing.empty()) throw IncompleteRatings(std::move(missing));
  CriteriaTable t;
  for (std::size_t p = 0; p < 3; ++p)
    for (std::size_t c = 0; c < 3; ++c) t.mean[p][c] = sum[p][c] / static_cast<double>(n);
  return t;
}

double relative_gain(double avg_original, double avg_generated) {
  if (avg_original == 0.0) throw Error("relative gain undefined for a zero baseline");
  return (avg_generated - avg_original) / avg_original;
}

HumanStudySummary human_study_summary(const RatingSet& ratings) {
  HumanStudySummary s;
  auto pairs = study_pairs(ratings, s.excluded_raters);
  if (pairs.empty()) throw Error("no human-study ratings");
  double sum_o = 0, sum_g = 0;
  std::size_t worse_responses = 0;
  std::map<std::string, std::pair<double, double>> per_item;
  std::map<std::string, std::size_t> per_item_n;
  for (const auto& [key, p] : pairs) {
    sum_o += *p.original;
    sum_g += *p.generated;
    if (*p.generated < *p.original) ++worse_responses;
    auto& acc = per_item[key.second];
    acc.first += *p.original;
    acc.second += *p.generated;
    ++per_item_n[key.second];
  }
  s.responses = pairs.size();
  s.avg_original = sum_o / static_cast<double>(s.responses);
  s.avg_generated = sum_g / static_cast<double>(s.responses);
  s.relative_gain = relative_gain(s.avg_original, s.avg_generated);
  std::size_t worse_items = 0;
  for (const auto& [item, acc] : per_item) {
    auto n = static_cast<double>(per_item_n[item]);
    if (acc.second / n < acc.first / n) ++worse_items;
  }
  s.items = per_item.size();
  s.pct_worse = 100.0 * static_cast<double>(worse_items) / static_cast<double>(s.items);
  s.pct_equal_or_better = 100.0 - s.pct_worse;
  s.pct_worse_responses = 100.0 * static_cast<double>(worse_responses) / static_cast<double>(s.responses);
  return s;
}

RatingMatrix::RatingMatrix(std::vector<std::vector<std::size_t>> counts) : counts_(std::move(counts)) {
  if (counts_.empty()) throw Error("rating matrix has no items");
  auto k = counts_.front().size();
  if (k < 1) throw Error("rating matrix has no categories");
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i].size() != k) throw Error("rating matrix rows differ in category count");
    std::size_t n = 0;
    for (auto c : counts_[i]) n += c;
    if (i == 0) raters_ = n;
    else if (n != raters_) throw Error("rating matrix rows must each sum to the same rater count");
  }
  if (raters_ < 2) throw Error("Fleiss' kappa needs at least two raters per item");
}

KappaResult fleiss_kappa(const RatingMatrix& m) {
  // Exact integer sums: S = sum n_ij^2, C = sum_j (sum_i n_ij)^2, T = N n.
  using Wide = __int128;
  const Wide n = static_cast<Wide>(m.raters());
  const Wide total = static_cast<Wide>(m.items()) * n;
  Wide sq = 0;
  std::vector<Wide> column(m.categories(), 0);
  for (std::size_t i = 0; i < m.items(); ++i)
    for (std::size_t j = 0; j < m.categories(); ++j) {
      Wide c = static_cast<Wide>(m(i, j));
      sq += c * c;
      column[j] += c;
    }
  Wide col_sq = 0;
  for (auto c : column) col_sq += c * c;

  KappaResult r;
  r.observed = static_cast<double>(static_cast<long double>(sq - total) / static_cast<long double>(total * (n - 1)));
  r.expected = static_cast<double>(static_cast<long double>(col_sq) / static_cast<long double>(total * total));
  if (col_sq == total * total) {
    r.kappa = 1.0;
    r.expected = 1.0;
    r.degenerate = true;
    return r;
  }
  // kappa = ((S - T)T - C(n - 1)) / ((n - 1)(T^2 - C))
  Wide num = (sq - total) * total - col_sq * (n - 1);
  Wide den = (n - 1) * (total * total - col_sq);
  r.kappa = static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
  return r;
}

RatingMatrix preference_matrix(const RatingSet& ratings) {
  std::vector<std::string> excluded;
  auto pairs = study_pairs(ratings, excluded);
  std::map<std::string, std::vector<std::size_t>> rows;
  for (const auto& [key, p] : pairs) {
    auto& row = rows.try_emplace(key.second, std::vector<std::size_t>(3, 0)).first->second;
    std::size_t cat = *p.generated < *p.original ? 0 : *p.generated == *p.original ? 1 : 2;
    ++row[cat];
  }
  std::vector<std::vector<std::size_t>> counts;
  for (auto& [item, row] : rows) counts.push_back(std::move(row));
  return RatingMatrix(std::move(counts));
}

ojson to_json(const CriteriaTable& t) {
  ojson j = ojson::array();
  for (std::size_t p = 0; p < 3; ++p) {
    ojson row;
    row["pattern"] = kPatterns[p];
    for (std::size_t c = 0; c < 3; ++c) row[std::string(kCriteria[c])] = t.display(p, c);
    j.push_back(std::move(row));
  }
  return j;
}

ojson to_json(const HumanStudySummary& s) {
  return ojson{{"avg_original", s.avg_original},
               {"avg_generated", s.avg_generated},
               {"relative_gain_pct", s.relative_gain * 100.0},
               {"pct_worse", s.pct_worse},
               {"pct_equal_or_better", s.pct_equal_or_better},
               {"pct_worse_responses", s.pct_worse_responses},
               {"items", s.items},
               {"responses", s.responses},
               {"excluded_raters", s.excluded_raters}};
}

ojson to_json(const KappaResult& k) {
  return ojson{{"kappa", k.kappa}, {"observed", k.observed}, {"expected", k.expected}, {"degenerate", k.degenerate}};
}

}  // namespace reef::eval
