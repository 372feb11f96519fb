// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#include "convoeval/report.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace convoeval::report {
namespace {

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

TEST(Report, ScoreTableHasTotalRowAndWinners) {
  const auto md = render_score_table(unify::winners_circle(oracle::worked_example_matrix()));
  EXPECT_TRUE(contains(md, "| Metric | bot1 | bot2 | bot3 | bot4 | bot5 | bot6 | bot7 |\n|---|"));
  EXPECT_TRUE(contains(md, "| **Total Score** | 10 | 10 | 5 | 4 | 4 | 3 | 2 |"));
  EXPECT_TRUE(contains(md, "Winners: bot1, bot2"));
  EXPECT_TRUE(contains(md, "3. bot4, bot5"));
}

TEST(Report, EmptyScoreTableRendersHeaderOnly) {
  unify::ScoreTable t;
  EXPECT_EQ(render_score_table(t), "| Metric |\n|---|\n");
}

TEST(Report, MatrixMarksUndefinedCells) {
  auto m = oracle::worked_example_matrix();
  m.cells[0][0].reset();
  const auto md = render_matrix(m);
  EXPECT_TRUE(contains(md, "| n/a |"));
  EXPECT_TRUE(contains(md, "95% percentile bootstrap"));
  EXPECT_TRUE(contains(md, "3.580 [3.530, 3.630]"));
}

TEST(Report, CorrelationFootnoteOnlyWhenNeeded) {
  unify::CorrelationReport r;
  r.metrics = {metrics::names::mean_depth};
  r.sources = {unify::RatingColumn::user};
  unify::CorrelationCell cell;
  cell.result = {0.5, 0.2, 5};
  cell.significant = false;
  r.cells = {{cell}};
  auto md = render_correlation(r);
  EXPECT_TRUE(contains(md, "| 0.50* |"));
  EXPECT_TRUE(contains(md, "p-value above the 0.05 significance level"));
  r.cells[0][0].significant = true;
  md = render_correlation(r);
  EXPECT_TRUE(contains(md, "| 0.50 |"));
  EXPECT_FALSE(contains(md, "significance level"));
  r.cells[0][0].status = unify::CellStatus::degenerate;
  EXPECT_TRUE(contains(render_correlation(r), "| degenerate |"));
}

TEST(Report, FullReportSections) {
  ReportInputs in;
  in.matrix = oracle::worked_example_matrix();
  in.score_tables.push_back(unify::winners_circle(*in.matrix));
  in.stack_ranking = unify::stack_rank(*in.matrix);
  const auto md = render_report(in);
  EXPECT_TRUE(contains(md, "## Metric matrix"));
  EXPECT_TRUE(contains(md, "## Unification: winners-circle"));
  EXPECT_TRUE(contains(md, "## Unification: stack-rank"));
  EXPECT_TRUE(contains(md, "| **Rank Sum** |"));
  EXPECT_FALSE(contains(md, "## Correlation"));
}

TEST(Report, MetricLabels) {
  EXPECT_EQ(metric_label("nope"), "nope");
  EXPECT_NE(metric_label(metrics::names::rer), metrics::names::rer);
  EXPECT_EQ(fixed(1.23456, 2), "1.23");
}

}  // namespace
}  // namespace convoeval::report
