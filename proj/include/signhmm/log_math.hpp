#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace signhmm {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// log(exp(a) + exp(b)); -inf if both are -inf.
inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

// log(sum_i exp(v[i])); -inf for an empty range or all -inf.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return kNegInf;
  const double hi = *std::max_element(v.begin(), v.end());
  if (hi == kNegInf) return kNegInf;
  if (hi == std::numeric_limits<double>::infinity()) return hi;
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

}  // namespace signhmm
