#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ebsde {

/// Power-law sampling schedule h = n^{-0.05 l}, c = max(2, round(n^{0.05 k})).
struct RateSchedule {
  std::int64_t n = 0;
  int l = 0;
  int k = 0;
  double h = 0.0;
  std::int64_t c = 0;
  bool valid = false;
  std::vector<std::string> violated;  // subset of {"a", "b", "c", "range"}
};

struct RateCheck {
  bool valid = false;
  std::vector<std::string> violated;
};

/// Admissible (l, k): 13 <= l <= 19 and max(1, 10 - l/2) <= k <= 2l - 20.
///   a      k <= 2l - 20       (n h^2 c -> 0; upper bound inclusive)
///   b      2k >= 20 - l       (sqrt(n h) / c -> 0)
///   c      l > 12             (n^3 h^5 -> 0)
///   range  l <= 19 and k >= 1
RateCheck check_rate_conditions(int l, int k);

/// Throws ConfigError unless n >= 10 and l, k >= 1.
RateSchedule schedule(std::int64_t n, int l, int k);

inline constexpr int kGridMinL = 13;
inline constexpr int kGridMaxL = 19;
inline constexpr int kGridMaxK = 18;

/// Validity grid as CSV: header "k,13,...,19", rows k = 1..18, cells 0/1.
std::string rate_grid_csv();

}  // namespace ebsde
