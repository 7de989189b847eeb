#pragma once

#include <vector>

#include "reef/analytics.hpp"

namespace reef::test {

// Per-language rows of the reference corpus, as reported for the full crawl.
inline std::vector<analytics::StatsRow> reference_stats_rows() {
  return {{"C++", 411, 2244, 2.88, 5.46, 86.81},     {"C", 1575, 6957, 2.14, 4.42, 62.97},
          {"Java", 541, 6207, 5.74, 11.47, 297.13},  {"Python", 863, 5797, 3.26, 6.72, 113.2},
          {"JS", 636, 5066, 4.26, 7.97, 130.32},     {"Go", 355, 3187, 4.54, 8.98, 195.43},
          {"C#", 85, 1529, 8.98, 17.99, 201.29}};
}

inline std::vector<analytics::MessageStatsRow> reference_message_rows() {
  return {{"C++", 411, 21, 234.93, 156, 415.02, 364},  {"C", 1575, 122, 380.0, 148, 389.78, 351},
          {"Java", 541, 38, 152.63, 68, 399.51, 356},  {"Python", 863, 36, 204.11, 125, 408.19, 363},
          {"JS", 636, 60, 123.74, 57.0, 382.84, 346.0}, {"Go", 355, 20, 237.68, 86, 401.15, 376},
          {"C#", 85, 3, 109.85, 52, 383.13, 340}};
}

}  // namespace reef::test
