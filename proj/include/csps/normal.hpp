#pragma once

// Standard normal distribution helpers and a tail-stable truncated normal
// sampler (inverse-CDF, with the one-sided cases evaluated in log space).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>

namespace csps {

using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Uniform draw on the open interval (0, 1).
inline double open_uniform(Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = 0.0;
  do {
    u = unif(rng);
  } while (u <= 0.0);
  return u;
}

inline double std_normal(Rng& rng) {
  std::normal_distribution<double> norm(0.0, 1.0);
  return norm(rng);
}

inline double normal_log_pdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double normal_pdf(double x) { return std::exp(normal_log_pdf(x)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// log(1 - Phi(x)), accurate far into both tails.
inline double log_upper_tail(double x) {
  if (x == kInf) return -kInf;
  if (x == -kInf) return 0.0;
  if (x < -5.0) return std::log1p(-0.5 * std::erfc(-x / std::numbers::sqrt2));
  if (x < 35.0) return std::log(0.5 * std::erfc(x / std::numbers::sqrt2));
  // Mills-ratio asymptotic series; relative error below 1e-12 past x = 35.
  const double r = 1.0 / (x * x);
  const double series = -r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r;
  return normal_log_pdf(x) - std::log(x) + std::log1p(series);
}

inline double log_lower_tail(double x) { return log_upper_tail(-x); }

// Phi^{-1}(p) for p in (0, 1).
inline double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> unit;
  return boost::math::quantile(unit, p);
}

// Inverse of log_upper_tail: the x with log(1 - Phi(x)) == log_tail.
inline double upper_tail_quantile_from_log(double log_tail) {
  static const boost::math::normal_distribution<double> unit;
  if (log_tail >= 0.0) return -kInf;
  if (log_tail > -700.0) {
    return boost::math::quantile(boost::math::complement(unit, std::exp(log_tail)));
  }
  // Below double range for the tail mass itself: Newton on the log tail.
  const double a = -2.0 * log_tail;
  double x = std::sqrt(a - std::log(a) - std::log(2.0 * std::numbers::pi));
  for (int it = 0; it < 8; ++it) {
    const double lt = log_upper_tail(x);
    const double slope = -std::exp(normal_log_pdf(x) - lt);
    const double step = (lt - log_tail) / slope;
    x -= step;
    if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

namespace detail {

// Standardized bounds with 0 <= lo < hi <= inf.
inline double sample_upper_region(Rng& rng, double lo, double hi) {
  const double log_lo = log_upper_tail(lo);
  const double log_hi = log_upper_tail(hi);
  const double u = open_uniform(rng);
  // log( S(lo) - u * (S(lo) - S(hi)) ), S the upper tail.
  const double shrink = -std::expm1(log_hi - log_lo);
  const double target = log_lo + std::log1p(-u * shrink);
  return upper_tail_quantile_from_log(target);
}

}  // namespace detail

// Draw from N(mean, sd^2) restricted to [lower, upper]. Either bound may be
// infinite. A zero-width interval returns the bound.
inline double sample_truncated_normal(Rng& rng, double mean, double sd, double lower,
                                      double upper) {
  const double alpha = (lower - mean) / sd;
  const double beta = (upper - mean) / sd;
  if (!(alpha < beta)) return lower;
  double x = 0.0;
  if (alpha >= 0.0) {
    x = detail::sample_upper_region(rng, alpha, beta);
  } else if (beta <= 0.0) {
    x = -detail::sample_upper_region(rng, -beta, -alpha);
  } else {
    const double pa = normal_cdf(alpha);
    const double pb = normal_cdf(beta);
    const double p = pa + open_uniform(rng) * (pb - pa);
    x = normal_quantile(std::clamp(p, std::numeric_limits<double>::min(),
                                   1.0 - std::numeric_limits<double>::epsilon()));
  }
  x = std::clamp(x, alpha, beta);
  return mean + sd * x;
}

// Beta(a, b) draw via two gamma variates.
inline double sample_beta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

}  // namespace csps
