// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Independent reference computations and fixtures shared by the unit tests
// and the acceptance binary. Nothing here calls the code it is used to check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "convoeval/metrics.hpp"
#include "convoeval/random.hpp"
#include "convoeval/topics.hpp"

namespace convoeval::oracle {

// Depth by counting label changes: runs = changes + 1.
inline double run_scan_depth(const std::vector<std::size_t>& seq) {
  std::size_t changes = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) changes += seq[i] != seq[i - 1];
  return static_cast<double>(seq.size()) / static_cast<double>(changes + 1);
}

// Enumerate all orderings of y's ranks and count those whose textbook
// rho = 1 - 6 sum d^2 / (n (n^2 - 1)) is at least as extreme. Distinct ranks only.
inline double permutation_spearman_p(const std::vector<int>& rank_x, const std::vector<int>& rank_y) {
  const int n = static_cast<int>(rank_x.size());
  auto rho = [&](const std::vector<int>& ry) {
    double d2 = 0;
    for (int i = 0; i < n; ++i) d2 += (rank_x[i] - ry[i]) * (rank_x[i] - ry[i]);
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
  };
  const double observed = std::abs(rho(rank_y));
  std::vector<int> perm(rank_y);
  std::sort(perm.begin(), perm.end());
  long extreme = 0, total = 0;
  do {
    ++total;
    if (std::abs(rho(perm)) >= observed - 1e-12) ++extreme;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

// Spearman coefficient of two rankings that may contain ties, via Pearson on
// mid-ranks computed by counting.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  auto midranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double below = 0, equal = 0;
      for (double w : v) {
        below += w < v[i];
        equal += w == v[i];
      }
      r[i] = below + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = midranks(x), ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Winners-circle style scoring re-derived from its definition: a bot scores
// on a metric when its point is at or past the benchmark union's bad edge
// (lower edge for higher-is-better, upper edge for lower-is-better).
inline std::vector<int> circle_totals(const metrics::MetricMatrix& m,
                                      const std::vector<std::vector<bool>>& is_benchmark /* [metric][bot] */) {
  std::vector<int> totals(m.bots.size(), 0);
  for (std::size_t k = 0; k < m.metrics.size(); ++k) {
    bool any = false;
    double lo = 1e300, hi = -1e300;
    for (std::size_t b = 0; b < m.bots.size(); ++b) {
      if (!is_benchmark[k][b] || !m.cells[b][k]) continue;
      any = true;
      lo = std::min(lo, m.cells[b][k]->lower);
      hi = std::max(hi, m.cells[b][k]->upper);
    }
    if (!any) continue;
    for (std::size_t b = 0; b < m.bots.size(); ++b) {
      if (!m.cells[b][k]) continue;
      const double p = m.cells[b][k]->point;
      const bool lower_better = m.metrics[k].orientation == metrics::Orientation::lower_is_better;
      if (is_benchmark[k][b] || (lower_better ? p <= hi : p >= lo)) ++totals[b];
    }
  }
  return totals;
}

// Benchmark set of the largest two keys, ties included, by sorting.
inline std::vector<bool> top_two_mask(const std::vector<std::optional<double>>& keys) {
  std::vector<double> defined;
  for (const auto& k : keys) {
    if (k) defined.push_back(*k);
  }
  std::vector<bool> mask(keys.size(), false);
  if (defined.empty()) return mask;
  std::sort(defined.rbegin(), defined.rend());
  const double cut = defined[std::min<std::size_t>(1, defined.size() - 1)];
  for (std::size_t i = 0; i < keys.size(); ++i) mask[i] = keys[i] && *keys[i] >= cut;
  return mask;
}

// ---------------------------------------------------------------------------
// Fixtures

// Binary score rows of the reference winners-circle example, bots 1..7.
struct ExampleRow {
  const char* metric;
  int scores[7];
};

inline const std::vector<ExampleRow>& worked_example_rows() {
  static const std::vector<ExampleRow> rows = {
      {metrics::names::mean_user_rating, {1, 1, 1, 0, 1, 0, 0}},
      {metrics::names::mean_frequent_user_rating, {1, 1, 1, 0, 1, 1, 0}},
      {metrics::names::rer, {1, 1, 0, 0, 1, 1, 0}},
      {metrics::names::mean_eer, {1, 1, 0, 0, 0, 0, 0}},
      {metrics::names::median_duration_s, {1, 1, 0, 0, 0, 0, 0}},
      {metrics::names::median_turns, {1, 1, 1, 1, 1, 0, 1}},
      {metrics::names::r_cov, {1, 1, 0, 1, 0, 1, 0}},
      {metrics::names::topical_vocab_size, {1, 1, 1, 1, 0, 0, 0}},
      {metrics::names::mean_topic_frequency, {1, 1, 0, 0, 0, 0, 1}},
      {metrics::names::mean_depth, {1, 1, 1, 1, 0, 0, 0}},
  };
  return rows;
}

inline const std::vector<int>& worked_example_totals() {
  static const std::vector<int> totals = {10, 10, 5, 4, 4, 3, 2};
  return totals;
}

// A metric matrix whose intervals reproduce the binary rows under the
// winners circle: bot1 and bot2 carry the top mean user ratings, scoring
// bots sit inside the winners' interval union and the rest sit on its bad
// side. Values are scaled per metric so the table reads plausibly.
inline metrics::MetricMatrix worked_example_matrix() {
  metrics::MetricMatrix m;
  for (int b = 1; b <= 7; ++b) m.bots.push_back("bot" + std::to_string(b));
  m.level = 0.95;
  m.cells.assign(7, {});
  const double user_points[7] = {3.62, 3.58, 3.55, 3.31, 3.54, 3.28, 3.20};
  for (const auto& row : worked_example_rows()) {
    const auto& info = metrics::metric_info(row.metric);
    m.metrics.push_back(info);
    const bool lower = info.orientation == metrics::Orientation::lower_is_better;
    // Centre and half-width of the winners' intervals in metric units.
    double centre = 1.0, half = 0.05;
    if (info.name == metrics::names::rer) centre = 0.12, half = 0.01;
    if (info.name == metrics::names::median_duration_s) centre = 190.0, half = 8.0;
    if (info.name == metrics::names::median_turns) centre = 12.0, half = 0.5;
    if (info.name == metrics::names::r_cov) centre = 9.0, half = 1.0;
    if (info.name == metrics::names::topical_vocab_size) centre = 410.0, half = 12.0;
    if (info.name == metrics::names::mean_topic_frequency) centre = 6.5, half = 0.4;
    if (info.name == metrics::names::mean_depth) centre = 2.4, half = 0.1;
    if (info.name == metrics::names::mean_user_rating || info.name == metrics::names::mean_frequent_user_rating ||
        info.name == metrics::names::mean_eer) {
      centre = 3.6, half = 0.05;
    }
    for (int b = 0; b < 7; ++b) {
      double point;
      if (b < 2) {
        point = centre + (b == 0 ? 0.02 : -0.02) * half * 10.0 * (lower ? -1.0 : 1.0);
      } else if (row.scores[b]) {
        point = centre + (lower ? 0.5 : -0.5) * half;
      } else {
        point = centre + (lower ? 3.0 : -3.0) * half - (lower ? -1.0 : 1.0) * 0.1 * half * b;
      }
      if (info.name == metrics::names::mean_user_rating) point = user_points[b];
      stats::ConfidenceInterval ci{point - half, point + half, m.level, point};
      m.cells[static_cast<std::size_t>(b)].push_back(ci);
    }
  }
  return m;
}

// Utterances built from filler stopwords and 2 keywords of one domain each,
// labelled with that domain.
inline std::vector<topics::LabeledUtterance> separable_utterances(const topics::TopicLexicon& lexicon,
                                                                  const std::vector<std::string>& domains,
                                                                  std::size_t per_domain, std::uint64_t seed) {
  static const std::vector<std::string> fillers = {"tell me about", "i really like", "what do you think about",
                                                   "do you know", "let us talk about"};
  Rng rng(seed);
  std::vector<topics::LabeledUtterance> out;
  for (const auto& d : domains) {
    const auto& kws = lexicon.keywords(lexicon.domains().index(d));
    const std::vector<std::string> pool(kws.begin(), kws.end());
    for (std::size_t i = 0; i < per_domain; ++i) {
      std::string text = fillers[uniform_index(rng, fillers.size())];
      text += " " + pool[uniform_index(rng, pool.size())];
      text += " and " + pool[uniform_index(rng, pool.size())];
      out.push_back({text, d});
    }
  }
  return out;
}

}  // namespace convoeval::oracle
