// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#include "convoeval/predictor.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace convoeval::predictor {
namespace {

Conversation pair_conversation() {
  Conversation c{"c", "bot", "u", {}, RatingRecord{4, RatingSource::user, {}}};
  c.turns = {{Speaker::user, "i like jazz music", 0},
             {Speaker::bot, "jazz is great music", 2000},
             {Speaker::user, "ok", 10000},
             {Speaker::bot, "sure", 11000},
             {Speaker::bot, "anything else", 12000}};
  return c;
}

TEST(Features, DenseValuesFromPairs) {
  const auto f = extract_features(pair_conversation());
  // Pairs: (0, 1) shares {jazz, music} of 4 user types, (2, 3) shares nothing.
  EXPECT_DOUBLE_EQ(f.token_overlap, (2.0 / 4.0 + 0.0) / 2.0);
  EXPECT_DOUBLE_EQ(f.duration_s, 12.0);
  EXPECT_DOUBLE_EQ(f.num_turns, 5.0);
  EXPECT_DOUBLE_EQ(f.mean_response_time_s, (2.0 + 1.0) / 2.0);
  EXPECT_EQ(f.value(0), f.token_overlap);
  EXPECT_EQ(f.value(3), f.mean_response_time_s);
}

TEST(Features, HashedNgramCounts) {
  FeatureConfig cfg;
  const auto f = extract_features(pair_conversation(), cfg);
  // Pair 1: 8 unigrams and 7 bigrams; pair 2: 2 unigrams and 1 bigram.
  double total = 0;
  for (const auto& [bucket, count] : f.ngrams) total += count;
  EXPECT_DOUBLE_EQ(total, 18.0);
  EXPECT_TRUE(std::is_sorted(f.ngrams.begin(), f.ngrams.end()));
  const auto jazz = static_cast<std::uint32_t>(text::fnv1a64(std::string("1\x1f") + "jazz") % cfg.buckets);
  EXPECT_DOUBLE_EQ(f.value(kDenseFeatures + jazz), 2.0);
  FeatureConfig one;
  one.buckets = 1;
  EXPECT_DOUBLE_EQ(extract_features(pair_conversation(), one).value(kDenseFeatures), 18.0);
  FeatureConfig none;
  none.buckets = 0;
  EXPECT_THROW(extract_features(pair_conversation(), none), ArgumentError);
}

TEST(Features, NoPairsMeansZeros) {
  Conversation c{"c", "bot", "u", {{Speaker::bot, "hi", 0}}, std::nullopt};
  const auto f = extract_features(c);
  EXPECT_EQ(f.token_overlap, 0.0);
  EXPECT_EQ(f.mean_response_time_s, 0.0);
  EXPECT_TRUE(f.ngrams.empty());
}

TEST(Split, DisjointCoverAndSeeded) {
  const auto [train, test] = train_test_split(10, 0.2, 3);
  EXPECT_EQ(test.size(), 2u);
  EXPECT_EQ(train.size(), 8u);
  std::vector<std::size_t> all(train);
  all.insert(all.end(), test.begin(), test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(train_test_split(10, 0.2, 3), train_test_split(10, 0.2, 3));
  EXPECT_EQ(train_test_split(3, 0.01, 0).second.size(), 1u);
  EXPECT_THROW(train_test_split(1, 0.5, 0), ArgumentError);
  EXPECT_THROW(train_test_split(5, 1.0, 0), ArgumentError);
}

FeatureVector dense(double a, double b = 0) {
  FeatureVector f;
  f.token_overlap = a;
  f.duration_s = b;
  return f;
}

TEST(Gbdt, ZeroTreesPredictsTheMean) {
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(dense(i));
    ys.push_back(i % 5 + 1);
  }
  GbdtConfig cfg;
  cfg.trees = 0;
  const auto m = train_gbdt(xs, ys, cfg);
  EXPECT_DOUBLE_EQ(m.predict(dense(100)), 3.0);
}

TEST(Gbdt, LearnsAStepFunction) {
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 40; ++i) {
    xs.push_back(dense(i, 7.0));
    ys.push_back(i < 20 ? 1.0 : 5.0);
  }
  GbdtConfig cfg;
  cfg.trees = 60;
  cfg.learning_rate = 0.3;
  const auto t = train_gbdt_with_history(xs, ys, cfg);
  EXPECT_EQ(t.model.trees.front().nodes[0].feature, 0);
  EXPECT_DOUBLE_EQ(t.model.trees.front().nodes[0].threshold, 19.5);
  EXPECT_NEAR(t.model.predict(dense(3)), 1.0, 1e-3);
  EXPECT_NEAR(t.model.predict(dense(30)), 5.0, 1e-3);
  EXPECT_LT(t.train_rmse.back(), 1e-3);
}

TEST(Gbdt, TrainingRmseNeverIncreases) {
  Rng rng(4);
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 200; ++i) {
    auto f = dense(uniform01(rng), uniform01(rng));
    f.ngrams = {{static_cast<std::uint32_t>(uniform_index(rng, 5)), 1.0}};
    ys.push_back(std::round(1 + 4 * uniform01(rng)));
    xs.push_back(std::move(f));
  }
  GbdtConfig cfg;
  cfg.trees = 50;
  cfg.subsample = 0.7;
  FeatureConfig fc;
  fc.buckets = 5;
  const auto t = train_gbdt_with_history(xs, ys, cfg, fc);
  ASSERT_EQ(t.train_rmse.size(), 51u);
  for (std::size_t i = 1; i < t.train_rmse.size(); ++i) EXPECT_LE(t.train_rmse[i], t.train_rmse[i - 1]);
  for (const auto& tree : t.model.trees) EXPECT_LE(tree.depth(), cfg.max_depth);
  EXPECT_EQ(train_gbdt(xs, ys, cfg, fc), t.model);
}

TEST(Gbdt, MinLeafIsRespected) {
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 12; ++i) {
    xs.push_back(dense(i));
    ys.push_back(i == 0 ? 5.0 : 1.0);
  }
  GbdtConfig cfg;
  cfg.trees = 1;
  cfg.min_leaf = 5;
  const auto m = train_gbdt(xs, ys, cfg);
  const auto& root = m.trees[0].nodes[0];
  ASSERT_GE(root.feature, 0);
  EXPECT_GE(root.threshold, 4.0);
}

TEST(Gbdt, RejectsBadInput) {
  const std::vector<FeatureVector> xs(4);
  const std::vector<double> ys = {1, 2, 3, 4};
  GbdtConfig cfg;
  cfg.min_leaf = 1;
  EXPECT_THROW(train_gbdt({}, {}, cfg), ArgumentError);
  EXPECT_THROW(train_gbdt(xs, std::vector<double>{1, 2}, cfg), ArgumentError);
  cfg.learning_rate = 0;
  EXPECT_THROW(train_gbdt(xs, ys, cfg), ArgumentError);
  cfg.learning_rate = 0.1;
  cfg.min_leaf = 3;
  EXPECT_THROW(train_gbdt(xs, ys, cfg), ArgumentError);
  cfg.min_leaf = 1;
  EXPECT_THROW(train_gbdt(xs, std::vector<double>{1, 2, NAN, 4}, cfg), ArgumentError);
}

TEST(Gbdt, ClampToScale) {
  GbdtModel m;
  m.base = 7.0;
  EXPECT_DOUBLE_EQ(m.predict(dense(0)), 7.0);
  EXPECT_DOUBLE_EQ(m.predict(dense(0), true), 5.0);
}

TEST(Gbdt, JsonRoundTrip) {
  std::vector<FeatureVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 30; ++i) {
    auto f = dense(i % 7, i % 3);
    f.ngrams = {{static_cast<std::uint32_t>(i % 4), 1.0 + i % 2}};
    xs.push_back(f);
    ys.push_back(1 + i % 5);
  }
  GbdtConfig cfg;
  cfg.trees = 10;
  cfg.min_leaf = 2;
  FeatureConfig fc;
  fc.buckets = 4;
  const auto m = train_gbdt(xs, ys, cfg, fc);
  const auto back = model_from_json(nlohmann::json::parse(to_json(m).dump()));
  EXPECT_EQ(back, m);
  for (const auto& x : xs) EXPECT_EQ(back.predict(x), m.predict(x));

  auto j = nlohmann::json::parse(to_json(m).dump());
  j["trees"][0] = nlohmann::json::array({nlohmann::json::array({0, 1.0, 0, 0, 0.0})});
  EXPECT_THROW(model_from_json(j), SchemaError);
  j["format"] = "other";
  EXPECT_THROW(model_from_json(j), SchemaError);
}

TEST(Evaluation, PerfectAndConstantPredictions) {
  const std::vector<double> actual = {1, 2, 3, 4, 5};
  const auto perfect = evaluate_predictions(actual, actual);
  EXPECT_DOUBLE_EQ(perfect.rmse, 0.0);
  ASSERT_TRUE(perfect.pearson.has_value());
  EXPECT_NEAR(perfect.pearson->coefficient, 1.0, 1e-12);
  const std::vector<double> flat(5, 3.0);
  const auto c = evaluate_predictions(flat, actual);
  EXPECT_DOUBLE_EQ(c.rmse, std::sqrt(2.0));
  EXPECT_FALSE(c.pearson.has_value());
  EXPECT_FALSE(c.spearman.has_value());
}

TEST(Evaluation, UniformRandomBaseline) {
  // E[(U - y)^2] for U uniform on {1..5}: y = 3 gives 2, y = 1 gives 6.
  EXPECT_NEAR(stats::uniform_random_rmse(std::vector<double>{3.0}), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(stats::uniform_random_rmse(std::vector<double>{1.0, 3.0}), std::sqrt(4.0), 1e-12);
}

TEST(RatedExamples, FiltersBySource) {
  auto a = pair_conversation();
  auto b = pair_conversation();
  b.conversation_id = "d";
  b.rating->source = RatingSource::engagement_evaluator;
  auto c = pair_conversation();
  c.conversation_id = "e";
  c.rating.reset();
  const Corpus corpus({a, b, c});
  EXPECT_EQ(rated_examples(corpus).conversation_ids, std::vector<std::string>{"c"});
  EXPECT_EQ(rated_examples(corpus, {}, RatingSource::engagement_evaluator).conversation_ids,
            std::vector<std::string>{"d"});
}

}  // namespace
}  // namespace convoeval::predictor
