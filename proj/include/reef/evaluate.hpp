#pragma once

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "reef/common.hpp"

namespace reef::eval {

// One line of a ratings file. `key` is `original`/`generated` for the human
// study, or `<pattern>/<criterion>` (e.g. `one_shot/traceability`) for the
// prompt-pattern comparison. A missing score is an explicit gap.
struct Rating {
  std::string rater;
  std::string item;
  std::string key;
  std::optional<double> score;
  bool is_sanity_check = false;
  std::optional<double> expected;
};

struct RatingSet {
  std::vector<Rating> ratings;

  // Header: rater_id,item_id,variant_or_criterion,score,is_sc,expected
  // (comma- or tab-separated).
  static RatingSet parse(std::string_view text);
  static RatingSet load(const std::string& path);
};

class IncompleteRatings : public Error {
 public:
  explicit IncompleteRatings(std::vector<std::string> cells);
  const std::vector<std::string>& cells() const noexcept { return cells_; }

 private:
  std::vector<std::string> cells_;
};

class NoValidRaters : public Error {
 public:
  NoValidRaters() : Error("every rater failed a sanity-check item") {}
};

inline constexpr std::array<std::string_view, 3> kPatterns = {"zero_shot", "one_shot", "few_shot"};
inline constexpr std::array<std::string_view, 3> kCriteria = {"comprehensiveness", "consistency", "traceability"};

double round_half_up(double value, int digits);

struct CriteriaTable {
  // mean[pattern][criterion], full precision.
  std::array<std::array<double, 3>, 3> mean{};

  double display(std::size_t pattern, std::size_t criterion) const {
    return round_half_up(mean[pattern][criterion], 2);
  }
};

CriteriaTable aggregate_criteria_scores(const RatingSet& ratings);

struct HumanStudySummary {
  double avg_original = 0.0;
  double avg_generated = 0.0;
  double relative_gain = 0.0;  // fraction, 0.2131 == 21.31%
  double pct_worse = 0.0;      // per item, percent
  double pct_equal_or_better = 0.0;
  double pct_worse_responses = 0.0;  // per (rater, item) response, percent
  std::size_t items = 0;
  std::size_t responses = 0;
  std::vector<std::string> excluded_raters;
};

double relative_gain(double avg_original, double avg_generated);

HumanStudySummary human_study_summary(const RatingSet& ratings);

// N items x k categories of assignment counts, n raters per item.
class RatingMatrix {
 public:
  explicit RatingMatrix(std::vector<std::vector<std::size_t>> counts);

  std::size_t items() const noexcept { return counts_.size(); }
  std::size_t categories() const noexcept { return counts_.empty() ? 0 : counts_.front().size(); }
  std::size_t raters() const noexcept { return raters_; }
  std::size_t operator()(std::size_t item, std::size_t category) const { return counts_[item][category]; }

 private:
  std::vector<std::vector<std::size_t>> counts_;
  std::size_t raters_ = 0;
};

struct KappaResult {
  double kappa = 0.0;
  double observed = 0.0;  // mean per-item agreement
  double expected = 0.0;  // chance agreement
  bool degenerate = false;
};

KappaResult fleiss_kappa(const RatingMatrix& matrix);

// Per (rater, item) preference: generated worse / equal / better than original.
// Uses the same rater exclusion as human_study_summary.
RatingMatrix preference_matrix(const RatingSet& ratings);

nlohmann::ordered_json to_json(const CriteriaTable& t);
nlohmann::ordered_json to_json(const HumanStudySummary& s);
nlohmann::ordered_json to_json(const KappaResult& k);

}  // namespace reef::eval
