// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Numeric core: entropy, percentile bootstrap, correlation with p-values and
// error measures. Everything here is a pure function; randomized routines take
// an explicit seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "convoeval/error.hpp"
#include "convoeval/random.hpp"

namespace convoeval::stats {

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  double point = 0.0;

  bool contains(double x) const noexcept { return lower <= x && x <= upper; }
  double width() const noexcept { return upper - lower; }
  friend bool operator==(const ConfidenceInterval&, const ConfidenceInterval&) = default;
};

struct CorrelationResult {
  double coefficient = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// ---------------------------------------------------------------------------
// Descriptive helpers

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw ArgumentError("mean of empty sample");
  // Shifted accumulation keeps constant samples exact.
  const double origin = xs.front();
  double acc = 0.0;
  for (double x : xs) acc += x - origin;
  return origin + acc / static_cast<double>(xs.size());
}

/// Quantile by linear interpolation between order statistics (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ArgumentError("quantile of empty sample");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw ArgumentError("median of empty sample");
  std::sort(xs.begin(), xs.end());
  return quantile_sorted(xs, 0.5);
}

/// Population standard deviation (divides by n).
inline double population_std(std::span<const double> xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// Entropy

/// Shannon entropy in bits of the distribution given by non-negative weights.
/// Weights are normalized internally; zero weights contribute nothing.
inline double shannon_entropy(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("entropy weights must be finite and non-negative");
    total += w;
  }
  if (total <= 0.0) throw ArgumentError("entropy of an all-zero distribution");
  double h = 0.0;
  for (double w : weights) {
    if (w <= 0.0) continue;
    const double p = w / total;
    h -= p * std::log2(p);
  }
  return std::max(0.0, h);
}

template <typename Key>
double shannon_entropy(const std::map<Key, double>& weights) {
  std::vector<double> w;
  w.reserve(weights.size());
  for (const auto& [_, v] : weights) w.push_back(v);
  return shannon_entropy(w);
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapOptions {
  double level = 0.95;
  std::size_t resamples = 2000;
  std::uint64_t seed = 0;
};

/// Percentile bootstrap of an arbitrary statistic over n resampling units.
///
/// `statistic` receives a list of unit indices (with repetition) and returns the
/// statistic or nullopt when it is undefined for that resample; undefined
/// resamples are dropped. Returns nullopt if the statistic is undefined on the
/// original sample. When every resample is undefined the interval collapses to
/// the point. The interval is widened if needed so that it always contains the
/// point estimate.
template <typename Statistic>
std::optional<ConfidenceInterval> bootstrap_statistic(std::size_t n, Statistic&& statistic,
                                                      const BootstrapOptions& opt) {
  if (n == 0) throw ArgumentError("bootstrap over zero units");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw ArgumentError("bootstrap level must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::optional<double> point = statistic(std::span<const std::size_t>(idx));
  if (!point) return std::nullopt;

  Rng rng(opt.seed);
  std::vector<double> replicates;
  replicates.reserve(opt.resamples);
  for (std::size_t r = 0; r < opt.resamples; ++r) {
    for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(rng, n));
    if (auto v = statistic(std::span<const std::size_t>(idx)); v && std::isfinite(*v)) replicates.push_back(*v);
  }
  ConfidenceInterval ci{*point, *point, opt.level, *point};
  if (!replicates.empty()) {
    std::sort(replicates.begin(), replicates.end());
    const double alpha = 1.0 - opt.level;
    ci.lower = std::min(quantile_sorted(replicates, alpha / 2.0), *point);
    ci.upper = std::max(quantile_sorted(replicates, 1.0 - alpha / 2.0), *point);
  }
  return ci;
}

/// Percentile bootstrap interval for the mean; point is the sample mean.
inline ConfidenceInterval bootstrap_ci(std::span<const double> samples, const BootstrapOptions& opt) {
  if (samples.empty()) throw ArgumentError("bootstrap_ci of empty sample");
  auto ci = bootstrap_statistic(
      samples.size(),
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        const double origin = samples[idx.front()];
        double acc = 0.0;
        for (auto i : idx) acc += samples[i] - origin;
        return origin + acc / static_cast<double>(idx.size());
      },
      opt);
  return *ci;
}

inline ConfidenceInterval bootstrap_ci(std::span<const double> samples, double level = 0.95,
                                       std::size_t resamples = 2000, std::uint64_t seed = 0) {
  return bootstrap_ci(samples, BootstrapOptions{level, resamples, seed});
}

// ---------------------------------------------------------------------------
// Correlation

namespace detail {

inline void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("correlation inputs differ in length");
  if (x.size() < 3) throw ArgumentError("correlation needs at least 3 pairs");
}

inline double pearson_coefficient(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DegenerateInputError("correlation input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Two-sided p-value of r under H0: rho = 0 via t with n-2 degrees of freedom.
inline double t_test_p_value(double r, std::size_t n) {
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace detail

/// Fractional ranks (1-based); ties receive the mean of the ranks they span.
inline std::vector<double> fractional_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Product-moment correlation with a two-sided t-test p-value.
inline CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const double r = detail::pearson_coefficient(x, y);
  return {r, detail::t_test_p_value(r, x.size()), x.size()};
}

/// Largest n for which spearman() enumerates all permutations for its p-value.
inline constexpr std::size_t kSpearmanExactMaxN = 9;

/// Rank correlation. For n <= 9 the p-value is the exact two-sided permutation
/// probability P(|rho_perm| >= |rho_obs|); otherwise the t approximation.
inline CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  const double rho = detail::pearson_coefficient(rx, ry);
  const std::size_t n = x.size();
  if (n > kSpearmanExactMaxN) return {rho, detail::t_test_p_value(rho, n), n};

  // Doubled ranks are integers, so n*sum(a*b) - sum(a)*sum(b) is an exact
  // integer proportional to rho for every permutation of b.
  std::vector<std::int64_t> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = std::llround(2.0 * rx[i]);
    b[i] = std::llround(2.0 * ry[i]);
  }
  const std::int64_t sa = std::accumulate(a.begin(), a.end(), std::int64_t{0});
  const std::int64_t sb = std::accumulate(b.begin(), b.end(), std::int64_t{0});
  const auto centered = [&](const std::vector<std::int64_t>& perm) {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * perm[i];
    const std::int64_t c = static_cast<std::int64_t>(n) * s - sa * sb;
    return c < 0 ? -c : c;
  };
  const std::int64_t observed = centered(b);
  // Enumerate positions rather than values so tied ranks are counted with
  // multiplicity, matching a uniform draw over all n! orderings.
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  std::uint64_t extreme = 0, total = 0;
  std::vector<std::int64_t> arranged(n);
  do {
    for (std::size_t i = 0; i < n; ++i) arranged[i] = b[pos[i]];
    if (centered(arranged) >= observed) ++extreme;
    ++total;
  } while (std::next_permutation(pos.begin(), pos.end()));
  return {rho, static_cast<double>(extreme) / static_cast<double>(total), n};
}

// ---------------------------------------------------------------------------
// Error measures

inline double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ArgumentError("rmse inputs differ in length");
  if (predicted.empty()) throw ArgumentError("rmse of empty input");
  double ss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

/// Expected RMSE of a predictor drawing uniformly from the integers
/// [lo, hi] against the given actual ratings: sqrt(mean_a E_p[(p - a)^2]).
inline double uniform_random_rmse(std::span<const double> actual, int lo = 1, int hi = 5) {
  if (actual.empty()) throw ArgumentError("uniform_random_rmse of empty input");
  if (hi < lo) throw ArgumentError("empty rating range");
  const double k = static_cast<double>(hi - lo + 1);
  double ss = 0.0;
  for (double a : actual) {
    double e = 0.0;
    for (int p = lo; p <= hi; ++p) e += (p - a) * (p - a);
    ss += e / k;
  }
  return std::sqrt(ss / static_cast<double>(actual.size()));
}

}  // namespace convoeval::stats
