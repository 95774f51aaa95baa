#include "ebsde/rates.hpp"

#include <algorithm>
#include <cmath>

#include "ebsde/errors.hpp"

namespace ebsde {

RateCheck check_rate_conditions(int l, int k) {
  RateCheck out;
  if (k > 2 * l - 20) out.violated.emplace_back("a");
  if (2 * k < 20 - l) out.violated.emplace_back("b");
  if (l <= 12) out.violated.emplace_back("c");
  if (l > kGridMaxL || k < 1) out.violated.emplace_back("range");
  out.valid = out.violated.empty();
  return out;
}

RateSchedule schedule(std::int64_t n, int l, int k) {
  if (n < 10) throw ConfigError("n", "rate schedule needs n >= 10");
  if (l < 1 || k < 1) throw ConfigError("rates", "l and k must be positive integers");
  const auto nd = static_cast<double>(n);
  RateSchedule out;
  out.n = n;
  out.l = l;
  out.k = k;
  out.h = std::pow(nd, -0.05 * l);
  out.c = std::max<std::int64_t>(2, std::llround(std::pow(nd, 0.05 * k)));
  RateCheck check = check_rate_conditions(l, k);
  out.valid = check.valid;
  out.violated = std::move(check.violated);
  return out;
}

std::string rate_grid_csv() {
  std::string csv = "k";
  for (int l = kGridMinL; l <= kGridMaxL; ++l) csv += "," + std::to_string(l);
  csv += "\n";
  for (int k = 1; k <= kGridMaxK; ++k) {
    csv += std::to_string(k);
    for (int l = kGridMinL; l <= kGridMaxL; ++l) {
      csv += check_rate_conditions(l, k).valid ? ",1" : ",0";
    }
    csv += "\n";
  }
  return csv;
}

}  // namespace ebsde
