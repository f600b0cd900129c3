#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "calibra/error.hpp"

namespace calibra {

// Pairwise (cascade) summation. The split points depend only on the length,
// so the result is reproducible for a given input order.
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kBlock = 32;
  if (xs.size() <= kBlock) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double mean(std::span<const double> xs) {
  return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

struct MeanSe {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n-1)
  double se = 0.0;  // sd / sqrt(n)
};

inline MeanSe mean_and_se(std::span<const double> xs) {
  MeanSe out;
  if (xs.empty()) return out;
  out.mean = mean(xs);
  if (xs.size() < 2) return out;
  std::vector<double> sq(xs.size());
  std::transform(xs.begin(), xs.end(), sq.begin(), [&](double x) { return (x - out.mean) * (x - out.mean); });
  out.sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(xs.size() - 1));
  out.se = out.sd / std::sqrt(static_cast<double>(xs.size()));
  return out;
}

// Standard normal CDF through erfc, accurate in both tails.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Minimizes a unimodal function on [lo, hi] until the bracket is narrower than tol.
template <typename F>
double golden_section_minimize(F&& f, double lo, double hi, double tol, int max_iterations = 500) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < max_iterations && (hi - lo) > tol; ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  return 0.5 * (lo + hi);
}

// Euclidean projection onto the probability simplex (sort-based algorithm).
inline std::vector<double> project_to_simplex(std::span<const double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [&](double x) { return std::max(x - theta, 0.0); });
  return out;
}

// 17 significant digits: enough for a bit-exact double round trip.
inline std::string format_decimal(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_decimal(const std::string& s) {
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &consumed);
  } catch (const std::exception&) {
    fail(ErrorKind::parse, "not a decimal number: '" + s + "'");
  }
  require(consumed == s.size(), ErrorKind::parse, "trailing characters in decimal: '" + s + "'");
  return value;
}

}  // namespace calibra
