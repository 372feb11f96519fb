// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Unification of a metric matrix into one ranking: stack ranking, winners
// circle and confidence bands. Also the metric-to-rating correlation report.

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "convoeval/corpus.hpp"
#include "convoeval/error.hpp"
#include "convoeval/metrics.hpp"
#include "convoeval/stats.hpp"

namespace convoeval::unify {

enum class Method { stack_rank, weighted_stack_rank, winners_circle, confidence_bands };

inline const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::stack_rank: return "stack-rank";
    case Method::weighted_stack_rank: return "weighted-stack-rank";
    case Method::winners_circle: return "winners-circle";
    case Method::confidence_bands: return "confidence-bands";
  }
  return "stack-rank";
}

inline std::optional<Method> parse_method(std::string_view s) noexcept {
  for (auto m : {Method::stack_rank, Method::weighted_stack_rank, Method::winners_circle, Method::confidence_bands}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

/// Groups of bots with equal keys, best group first; members keep bot order.
inline std::vector<std::vector<std::string>> group_by_key(const std::vector<std::string>& bots,
                                                          const std::vector<double>& keys, bool descending) {
  std::vector<std::size_t> order(bots.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return descending ? keys[a] > keys[b] : keys[a] < keys[b]; });
  std::vector<std::vector<std::string>> groups;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || keys[order[i]] != keys[order[i - 1]]) groups.emplace_back();
    groups.back().push_back(bots[order[i]]);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Stack ranking

enum class UndefinedPolicy { exclude_metric, exclude_bot };

struct StackRankOptions {
  std::optional<std::map<std::string, double>> weights;  // metric -> weight; unlisted metrics weigh 1
  UndefinedPolicy undefined = UndefinedPolicy::exclude_metric;
};

struct StackRanking {
  Method method = Method::stack_rank;
  std::vector<std::string> bots;     // ranked bots, matrix order
  std::vector<std::string> metrics;  // metrics that entered the score
  std::vector<double> weights;       // normalized, per metric
  std::vector<std::vector<double>> ranks;  // [bot][metric], 1 = best
  std::vector<double> scores;              // per bot, lower is better
  std::vector<std::vector<std::string>> order;  // groups of equal score, best first
  std::vector<std::string> excluded_metrics;
  std::vector<std::string> excluded_bots;
};

/// Rank every bot per metric (1 = best, ties share the mean rank) and sum the
/// weighted ranks. Descriptive metrics are skipped. Weights are divided by
/// the largest weight, so any uniform weighting reproduces the unweighted
/// scores exactly.
inline StackRanking stack_rank(const metrics::MetricMatrix& matrix, const StackRankOptions& opt = {}) {
  StackRanking out;
  out.method = opt.weights ? Method::weighted_stack_rank : Method::stack_rank;
  std::vector<std::size_t> candidate_metrics;
  for (std::size_t m = 0; m < matrix.metrics.size(); ++m) {
    if (matrix.metrics[m].orientation != metrics::Orientation::descriptive) candidate_metrics.push_back(m);
  }
  std::vector<double> raw_weights;
  if (opt.weights) {
    for (const auto& [name, w] : *opt.weights) {
      if (!matrix.metric_index(name)) throw ArgumentError("weight for unknown metric '" + name + "'");
      if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("weights must be finite and non-negative");
    }
  }
  auto weight_of = [&](std::size_t m) {
    if (!opt.weights) return 1.0;
    auto it = opt.weights->find(matrix.metrics[m].name);
    return it == opt.weights->end() ? 1.0 : it->second;
  };

  std::vector<std::size_t> bots(matrix.bots.size());
  std::iota(bots.begin(), bots.end(), std::size_t{0});
  std::vector<std::size_t> used;
  if (opt.undefined == UndefinedPolicy::exclude_metric) {
    for (auto m : candidate_metrics) {
      const bool complete = std::all_of(bots.begin(), bots.end(), [&](std::size_t b) { return matrix.cells[b][m].has_value(); });
      (complete ? used.push_back(m) : out.excluded_metrics.push_back(matrix.metrics[m].name));
    }
  } else {
    used = candidate_metrics;
    std::vector<std::size_t> kept;
    for (auto b : bots) {
      const bool complete = std::all_of(used.begin(), used.end(), [&](std::size_t m) { return matrix.cells[b][m].has_value(); });
      (complete ? kept.push_back(b) : out.excluded_bots.push_back(matrix.bots[b]));
    }
    bots = kept;
  }
  double max_w = 0.0;
  for (auto m : used) max_w = std::max(max_w, weight_of(m));
  if (opt.weights && max_w <= 0.0) throw ArgumentError("all weights are zero");

  for (auto b : bots) out.bots.push_back(matrix.bots[b]);
  out.ranks.assign(bots.size(), {});
  out.scores.assign(bots.size(), 0.0);
  for (auto m : used) {
    out.metrics.push_back(matrix.metrics[m].name);
    const double w = max_w > 0.0 ? weight_of(m) / max_w : 0.0;
    out.weights.push_back(w);
    std::vector<double> keyed;
    for (auto b : bots) {
      const double v = matrix.cells[b][m]->point;
      keyed.push_back(matrix.metrics[m].orientation == metrics::Orientation::lower_is_better ? v : -v);
    }
    const auto r = stats::fractional_ranks(keyed);
    for (std::size_t i = 0; i < bots.size(); ++i) {
      out.ranks[i].push_back(r[i]);
      out.scores[i] += w * r[i];
    }
  }
  out.order = group_by_key(out.bots, out.scores, false);
  return out;
}

// ---------------------------------------------------------------------------
// Winners circle and confidence bands

/// How a bot qualifies against the benchmark bots' intervals.
enum class CircleSemantics {
  point_in_union,    // point estimate within, or on the good side of, the union of benchmark intervals
  interval_overlap,  // the bot's interval reaches the union (or lies on its good side)
};

struct ScoreTable {
  Method method = Method::winners_circle;
  std::vector<std::string> bots;
  std::vector<std::string> metrics;
  std::vector<std::vector<int>> scores;  // [bot][metric] in {0, 1}
  std::vector<int> totals;
  std::vector<std::vector<std::string>> bands;  // equal totals, highest first
  std::vector<std::string> winners;                     // winners circle only
  std::vector<std::vector<std::string>> benchmarks;     // per metric
};

namespace detail {

/// Bots whose key is at least the second-largest key (ties included).
inline std::vector<std::size_t> top_two(const std::vector<std::pair<std::size_t, double>>& keyed) {
  if (keyed.empty()) return {};
  std::vector<double> keys;
  for (const auto& [_, k] : keyed) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), std::greater<>());
  const double cut = keys[std::min<std::size_t>(1, keys.size() - 1)];
  std::vector<std::size_t> out;
  for (const auto& [b, k] : keyed) {
    if (k >= cut) out.push_back(b);
  }
  return out;
}

inline int qualifies(const stats::ConfidenceInterval& c, double lo, double hi, metrics::Orientation o,
                     CircleSemantics sem) {
  const double a = sem == CircleSemantics::point_in_union ? c.point : c.lower;
  const double z = sem == CircleSemantics::point_in_union ? c.point : c.upper;
  switch (o) {
    case metrics::Orientation::higher_is_better: return z >= lo;
    case metrics::Orientation::lower_is_better: return a <= hi;
    case metrics::Orientation::descriptive: return z >= lo && a <= hi;
  }
  return 0;
}

inline ScoreTable score_against(const metrics::MetricMatrix& matrix, Method method,
                                const std::vector<std::vector<std::size_t>>& benchmark, CircleSemantics sem) {
  ScoreTable t;
  t.method = method;
  t.bots = matrix.bots;
  t.scores.assign(matrix.bots.size(), std::vector<int>(matrix.metrics.size(), 0));
  for (std::size_t m = 0; m < matrix.metrics.size(); ++m) {
    t.metrics.push_back(matrix.metrics[m].name);
    std::vector<std::string> names;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto b : benchmark[m]) {
      const auto& c = matrix.cells[b][m];
      if (!c) continue;
      names.push_back(matrix.bots[b]);
      lo = std::min(lo, c->lower);
      hi = std::max(hi, c->upper);
    }
    t.benchmarks.push_back(names);
    if (names.empty()) continue;
    for (std::size_t b = 0; b < matrix.bots.size(); ++b) {
      const auto& c = matrix.cells[b][m];
      if (!c) continue;
      const bool is_benchmark = std::find(benchmark[m].begin(), benchmark[m].end(), b) != benchmark[m].end();
      t.scores[b][m] = is_benchmark ? 1 : qualifies(*c, lo, hi, matrix.metrics[m].orientation, sem);
    }
  }
  std::vector<double> keys;
  for (const auto& row : t.scores) {
    t.totals.push_back(std::accumulate(row.begin(), row.end(), 0));
    keys.push_back(t.totals.back());
  }
  t.bands = group_by_key(t.bots, keys, true);
  return t;
}

}  // namespace detail

/// Mean user rating per bot taken from the matrix column.
inline std::vector<std::optional<double>> matrix_user_ratings(const metrics::MetricMatrix& matrix) {
  const auto m = matrix.metric_index(metrics::names::mean_user_rating);
  if (!m) throw ArgumentError("matrix has no mean_user_rating column");
  return matrix.column(*m);
}

/// Score 1 per metric for bots within the error bars of the two top-rated
/// bots (all bots tied at the cut are winners). Undefined cells score 0.
inline ScoreTable winners_circle(const metrics::MetricMatrix& matrix, const std::vector<std::optional<double>>& user_ratings,
                                 CircleSemantics sem = CircleSemantics::point_in_union) {
  if (user_ratings.size() != matrix.bots.size()) throw ArgumentError("one user rating per bot is required");
  std::vector<std::pair<std::size_t, double>> rated;
  for (std::size_t b = 0; b < user_ratings.size(); ++b) {
    if (user_ratings[b]) rated.emplace_back(b, *user_ratings[b]);
  }
  if (rated.size() < 2) throw ArgumentError("winners circle needs at least 2 bots with a mean user rating");
  const auto winners = detail::top_two(rated);
  auto t = detail::score_against(matrix, Method::winners_circle,
                                 std::vector<std::vector<std::size_t>>(matrix.metrics.size(), winners), sem);
  for (auto w : winners) t.winners.push_back(matrix.bots[w]);
  return t;
}

inline ScoreTable winners_circle(const metrics::MetricMatrix& matrix,
                                 CircleSemantics sem = CircleSemantics::point_in_union) {
  return winners_circle(matrix, matrix_user_ratings(matrix), sem);
}

/// Like the winners circle, but each metric's benchmark is its own top two
/// bots by oriented point estimate.
inline ScoreTable confidence_bands(const metrics::MetricMatrix& matrix,
                                   CircleSemantics sem = CircleSemantics::point_in_union) {
  if (matrix.bots.size() < 2) throw ArgumentError("confidence bands need at least 2 bots");
  std::vector<std::vector<std::size_t>> benchmark;
  for (std::size_t m = 0; m < matrix.metrics.size(); ++m) {
    std::vector<std::pair<std::size_t, double>> keyed;
    for (std::size_t b = 0; b < matrix.bots.size(); ++b) {
      if (const auto& c = matrix.cells[b][m]) {
        keyed.emplace_back(b, matrix.metrics[m].orientation == metrics::Orientation::lower_is_better ? -c->point
                                                                                                     : c->point);
      }
    }
    benchmark.push_back(detail::top_two(keyed));
  }
  return detail::score_against(matrix, Method::confidence_bands, benchmark, sem);
}

// ---------------------------------------------------------------------------
// Correlation with ratings

inline constexpr double kSignificanceLevel = 0.05;

/// Rating populations correlated against: all user ratings, ratings from
/// frequent users only, and engagement-evaluator ratings.
enum class RatingColumn { user, frequent_user, engagement_evaluator };

inline const char* to_string(RatingColumn c) noexcept {
  switch (c) {
    case RatingColumn::user: return "user";
    case RatingColumn::frequent_user: return "frequent_user";
    case RatingColumn::engagement_evaluator: return "engagement_evaluator";
  }
  return "user";
}

inline std::optional<RatingColumn> parse_rating_column(std::string_view s) noexcept {
  for (auto c : {RatingColumn::user, RatingColumn::frequent_user, RatingColumn::engagement_evaluator}) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

enum class CellStatus { ok, degenerate, insufficient };

inline const char* to_string(CellStatus s) noexcept {
  switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::degenerate: return "degenerate";
    case CellStatus::insufficient: return "insufficient";
  }
  return "ok";
}

struct CorrelationCell {
  CellStatus status = CellStatus::ok;
  stats::CorrelationResult result;
  bool significant = false;  // p <= significance level
};

struct CorrelationReport {
  std::vector<std::string> metrics;
  std::vector<RatingColumn> sources;
  std::vector<std::vector<CorrelationCell>> cells;  // [metric][source]
  double significance_level = kSignificanceLevel;
};

/// Per-bot mean rating for each source, in bot order.
using RatingMeans = std::map<RatingColumn, std::vector<std::optional<double>>>;

/// Rating means read from the matrix's rating columns.
inline RatingMeans matrix_rating_means(const metrics::MetricMatrix& matrix) {
  RatingMeans out;
  const std::pair<RatingColumn, const char*> columns[] = {
      {RatingColumn::user, metrics::names::mean_user_rating},
      {RatingColumn::frequent_user, metrics::names::mean_frequent_user_rating},
      {RatingColumn::engagement_evaluator, metrics::names::mean_eer}};
  for (const auto& [source, name] : columns) {
    if (auto m = matrix.metric_index(name)) out[source] = matrix.column(*m);
  }
  return out;
}

/// Pearson correlation of every non-rating metric's per-bot points against
/// each source's per-bot means. Bots missing either value are left out of
/// that cell; fewer than 3 pairs marks the cell insufficient and a constant
/// column marks it degenerate.
inline CorrelationReport correlate_with_ratings(const metrics::MetricMatrix& matrix, const RatingMeans& ratings) {
  if (matrix.bots.size() < 3) throw ArgumentError("correlation needs at least 3 bots");
  CorrelationReport out;
  for (const auto& [source, values] : ratings) {
    if (values.size() != matrix.bots.size()) throw ArgumentError("one rating mean per bot is required");
    out.sources.push_back(source);
  }
  const std::set<std::string> rating_columns = {metrics::names::mean_user_rating,
                                                metrics::names::mean_frequent_user_rating, metrics::names::mean_eer};
  for (std::size_t m = 0; m < matrix.metrics.size(); ++m) {
    if (rating_columns.contains(matrix.metrics[m].name)) continue;
    out.metrics.push_back(matrix.metrics[m].name);
    const auto column = matrix.column(m);
    std::vector<CorrelationCell> row;
    for (const auto& [source, values] : ratings) {
      std::vector<double> x, y;
      for (std::size_t b = 0; b < column.size(); ++b) {
        if (column[b] && values[b]) {
          x.push_back(*column[b]);
          y.push_back(*values[b]);
        }
      }
      CorrelationCell cell;
      cell.result.n = x.size();
      if (x.size() < 3) {
        cell.status = CellStatus::insufficient;
      } else {
        try {
          cell.result = stats::pearson(x, y);
          cell.significant = cell.result.p_value <= out.significance_level;
        } catch (const DegenerateInputError&) {
          cell.status = CellStatus::degenerate;
        }
      }
      row.push_back(cell);
    }
    out.cells.push_back(std::move(row));
  }
  return out;
}

inline CorrelationReport correlate_with_ratings(const metrics::MetricMatrix& matrix) {
  return correlate_with_ratings(matrix, matrix_rating_means(matrix));
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kRankingFormat = "convoeval-ranking";
inline constexpr const char* kCorrelationFormat = "convoeval-correlation";

inline nlohmann::ordered_json to_json(const StackRanking& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < r.bots.size(); ++b) {
    rows.push_back({{"bot", r.bots[b]}, {"ranks", r.ranks[b]}, {"score", r.scores[b]}});
  }
  return {{"format", kRankingFormat},
          {"version", 1},
          {"method", to_string(r.method)},
          {"metrics", r.metrics},
          {"weights", r.weights},
          {"rows", rows},
          {"order", r.order},
          {"excluded_metrics", r.excluded_metrics},
          {"excluded_bots", r.excluded_bots}};
}

inline nlohmann::ordered_json to_json(const ScoreTable& t, CircleSemantics sem) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < t.bots.size(); ++b) {
    rows.push_back({{"bot", t.bots[b]}, {"scores", t.scores[b]}, {"total", t.totals[b]}});
  }
  nlohmann::ordered_json j = {{"format", kRankingFormat},
                              {"version", 1},
                              {"method", to_string(t.method)},
                              {"semantics", sem == CircleSemantics::point_in_union ? "point-in-union" : "overlap"},
                              {"metrics", t.metrics},
                              {"rows", rows},
                              {"bands", t.bands},
                              {"benchmarks", t.benchmarks}};
  if (t.method == Method::winners_circle) j["winners"] = t.winners;
  return j;
}

inline ScoreTable score_table_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kRankingFormat) throw SchemaError("not a ranking document");
    const auto method = parse_method(j.at("method").get<std::string>());
    if (!method || *method == Method::stack_rank || *method == Method::weighted_stack_rank) {
      throw SchemaError("ranking document does not hold a score table");
    }
    ScoreTable t;
    t.method = *method;
    t.metrics = j.at("metrics").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
      t.bots.push_back(row.at("bot").get<std::string>());
      t.scores.push_back(row.at("scores").get<std::vector<int>>());
      t.totals.push_back(row.at("total").get<int>());
      if (t.scores.back().size() != t.metrics.size()) throw SchemaError("score row length does not match metrics");
    }
    t.bands = j.at("bands").get<std::vector<std::vector<std::string>>>();
    if (j.contains("winners")) t.winners = j["winners"].get<std::vector<std::string>>();
    if (j.contains("benchmarks")) t.benchmarks = j["benchmarks"].get<std::vector<std::vector<std::string>>>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed ranking: ") + e.what());
  }
}

inline nlohmann::ordered_json to_json(const CorrelationReport& r) {
  nlohmann::ordered_json sources = nlohmann::ordered_json::array();
  for (auto s : r.sources) sources.push_back(to_string(s));
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < r.metrics.size(); ++m) {
    nlohmann::ordered_json cells = nlohmann::ordered_json::object();
    for (std::size_t s = 0; s < r.sources.size(); ++s) {
      const auto& c = r.cells[m][s];
      nlohmann::ordered_json cell = {{"status", to_string(c.status)}, {"n", c.result.n}};
      if (c.status == CellStatus::ok) {
        cell["coefficient"] = c.result.coefficient;
        cell["p_value"] = c.result.p_value;
        cell["significant"] = c.significant;
      }
      cells[to_string(r.sources[s])] = cell;
    }
    rows.push_back({{"metric", r.metrics[m]}, {"cells", cells}});
  }
  return {{"format", kCorrelationFormat},
          {"version", 1},
          {"significance_level", r.significance_level},
          {"sources", sources},
          {"rows", rows}};
}

inline CorrelationReport correlation_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCorrelationFormat) throw SchemaError("not a correlation document");
    CorrelationReport r;
    r.significance_level = j.at("significance_level").get<double>();
    for (const auto& s : j.at("sources")) {
      const auto src = parse_rating_column(s.get<std::string>());
      if (!src) throw SchemaError("unknown rating source '" + s.get<std::string>() + "'");
      r.sources.push_back(*src);
    }
    for (const auto& row : j.at("rows")) {
      r.metrics.push_back(row.at("metric").get<std::string>());
      std::vector<CorrelationCell> cells;
      for (auto s : r.sources) {
        const auto& c = row.at("cells").at(to_string(s));
        CorrelationCell cell;
        const auto status = c.at("status").get<std::string>();
        cell.status = status == "ok" ? CellStatus::ok
                      : status == "degenerate" ? CellStatus::degenerate
                      : status == "insufficient" ? CellStatus::insufficient
                      : throw SchemaError("unknown cell status '" + status + "'");
        cell.result.n = c.at("n").get<std::size_t>();
        if (cell.status == CellStatus::ok) {
          cell.result.coefficient = c.at("coefficient").get<double>();
          cell.result.p_value = c.at("p_value").get<double>();
          cell.significant = c.at("significant").get<bool>();
        }
        cells.push_back(cell);
      }
      r.cells.push_back(std::move(cells));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed correlation report: ") + e.what());
  }
}

}  // namespace convoeval::unify
