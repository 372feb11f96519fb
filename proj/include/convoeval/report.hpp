// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Markdown rendering of metric matrices, score tables and correlation reports.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "convoeval/metrics.hpp"
#include "convoeval/unify.hpp"

namespace convoeval::report {

inline std::string fixed(double x, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

/// Row label for a metric name; unknown names are shown as-is.
inline std::string metric_label(const std::string& name) {
  for (const auto& m : metrics::metric_catalog()) {
    if (m.name == name) return m.label;
  }
  return name;
}

namespace detail {

inline void header(std::ostream& out, const std::string& first, const std::vector<std::string>& columns) {
  out << "| " << first << " |";
  for (const auto& c : columns) out << ' ' << c << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
  out << '\n';
}

}  // namespace detail

inline std::string render_matrix(const metrics::MetricMatrix& m) {
  std::ostringstream out;
  detail::header(out, "Metric", m.bots);
  for (std::size_t k = 0; k < m.metrics.size(); ++k) {
    out << "| " << m.metrics[k].label << " |";
    for (std::size_t b = 0; b < m.bots.size(); ++b) {
      const auto& c = m.cells[b][k];
      out << ' ' << (c ? fixed(c->point) + " [" + fixed(c->lower) + ", " + fixed(c->upper) + "]" : "n/a") << " |";
    }
    out << '\n';
  }
  out << "\nIntervals are " << fixed(100.0 * m.level, 0) << "% percentile bootstrap intervals; n/a marks an undefined metric.\n";
  return out.str();
}

inline std::string render_score_table(const unify::ScoreTable& t) {
  std::ostringstream out;
  detail::header(out, "Metric", t.bots);
  for (std::size_t k = 0; k < t.metrics.size(); ++k) {
    out << "| " << metric_label(t.metrics[k]) << " |";
    for (std::size_t b = 0; b < t.bots.size(); ++b) out << ' ' << t.scores[b][k] << " |";
    out << '\n';
  }
  if (!t.bots.empty() && !t.metrics.empty()) {
    out << "| **Total Score** |";
    for (auto total : t.totals) out << ' ' << total << " |";
    out << '\n';
  }
  if (!t.winners.empty()) {
    out << "\nWinners: ";
    for (std::size_t i = 0; i < t.winners.size(); ++i) out << (i ? ", " : "") << t.winners[i];
    out << '\n';
  }
  if (!t.bands.empty()) {
    out << "\nBands (highest total first):\n";
    for (std::size_t i = 0; i < t.bands.size(); ++i) {
      out << i + 1 << ". ";
      for (std::size_t j = 0; j < t.bands[i].size(); ++j) out << (j ? ", " : "") << t.bands[i][j];
      out << '\n';
    }
  }
  return out.str();
}

inline std::string render_stack_ranking(const unify::StackRanking& r) {
  std::ostringstream out;
  detail::header(out, "Metric", r.bots);
  for (std::size_t k = 0; k < r.metrics.size(); ++k) {
    out << "| " << metric_label(r.metrics[k]) << " |";
    for (std::size_t b = 0; b < r.bots.size(); ++b) out << ' ' << fixed(r.ranks[b][k], 1) << " |";
    out << '\n';
  }
  if (!r.bots.empty() && !r.metrics.empty()) {
    out << "| **Rank Sum** |";
    for (auto s : r.scores) out << ' ' << fixed(s, 2) << " |";
    out << '\n';
  }
  if (!r.order.empty()) {
    out << "\nOrder (lowest rank sum first):\n";
    for (std::size_t i = 0; i < r.order.size(); ++i) {
      out << i + 1 << ". ";
      for (std::size_t j = 0; j < r.order[i].size(); ++j) out << (j ? ", " : "") << r.order[i][j];
      out << '\n';
    }
  }
  if (!r.excluded_metrics.empty()) {
    out << "\nLeft out for undefined values: ";
    for (std::size_t i = 0; i < r.excluded_metrics.size(); ++i) out << (i ? ", " : "") << r.excluded_metrics[i];
    out << '\n';
  }
  return out.str();
}

inline std::string render_correlation(const unify::CorrelationReport& r) {
  std::ostringstream out;
  std::vector<std::string> columns;
  for (auto s : r.sources) columns.push_back(to_string(s));
  detail::header(out, "Metric", columns);
  bool any_marked = false;
  for (std::size_t k = 0; k < r.metrics.size(); ++k) {
    out << "| " << metric_label(r.metrics[k]) << " |";
    for (std::size_t s = 0; s < r.sources.size(); ++s) {
      const auto& c = r.cells[k][s];
      std::string text;
      switch (c.status) {
        case unify::CellStatus::ok:
          text = fixed(c.result.coefficient, 2);
          if (!c.significant) {
            text += "*";
            any_marked = true;
          }
          break;
        case unify::CellStatus::degenerate: text = "degenerate"; break;
        case unify::CellStatus::insufficient: text = "n/a"; break;
      }
      out << ' ' << text << " |";
    }
    out << '\n';
  }
  out << "\nPearson correlation across bots, two-sided t-test.";
  if (any_marked) out << "\n\\* p-value above the " << fixed(r.significance_level, 2) << " significance level.";
  out << '\n';
  return out.str();
}

struct ReportInputs {
  std::optional<metrics::MetricMatrix> matrix;
  std::vector<unify::ScoreTable> score_tables;
  std::optional<unify::StackRanking> stack_ranking;
  std::optional<unify::CorrelationReport> correlation;
};

inline std::string render_report(const ReportInputs& in) {
  std::ostringstream out;
  out << "# Conversational agent evaluation\n";
  if (in.matrix) out << "\n## Metric matrix\n\n" << render_matrix(*in.matrix);
  for (const auto& t : in.score_tables) {
    out << "\n## Unification: " << unify::to_string(t.method) << "\n\n" << render_score_table(t);
  }
  if (in.stack_ranking) {
    out << "\n## Unification: " << unify::to_string(in.stack_ranking->method) << "\n\n"
        << render_stack_ranking(*in.stack_ranking);
  }
  if (in.correlation) out << "\n## Correlation with ratings\n\n" << render_correlation(*in.correlation);
  return out.str();
}

}  // namespace convoeval::report
