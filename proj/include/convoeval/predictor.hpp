// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Conversation-level rating prediction: hashed n-gram and conversation
// features fed to a squared-loss gradient-boosted regression tree ensemble.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convoeval/corpus.hpp"
#include "convoeval/error.hpp"
#include "convoeval/random.hpp"
#include "convoeval/stats.hpp"
#include "convoeval/text.hpp"

namespace convoeval::predictor {

// ---------------------------------------------------------------------------
// Features

inline constexpr std::size_t kDenseFeatures = 4;
inline const std::vector<std::string>& dense_feature_names() {
  static const std::vector<std::string> names = {"token_overlap", "duration_s", "num_turns", "mean_response_time_s"};
  return names;
}

struct FeatureConfig {
  std::uint32_t buckets = 1u << 15;
  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

/// Index layout: 0..3 are the dense features in `dense_feature_names()`
/// order, then one column per hash bucket.
struct FeatureVector {
  double token_overlap = 0.0;
  double duration_s = 0.0;
  double num_turns = 0.0;
  double mean_response_time_s = 0.0;
  std::vector<std::pair<std::uint32_t, double>> ngrams;  // (bucket, count), sorted by bucket

  std::size_t dimension(const FeatureConfig& cfg) const { return kDenseFeatures + cfg.buckets; }

  /// Value of feature `f`; absent buckets are 0.
  double value(std::size_t f) const {
    switch (f) {
      case 0: return token_overlap;
      case 1: return duration_s;
      case 2: return num_turns;
      case 3: return mean_response_time_s;
      default: break;
    }
    const auto bucket = static_cast<std::uint32_t>(f - kDenseFeatures);
    auto it = std::lower_bound(ngrams.begin(), ngrams.end(), bucket,
                               [](const auto& e, std::uint32_t b) { return e.first < b; });
    return it != ngrams.end() && it->first == bucket ? it->second : 0.0;
  }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Features of one conversation. A (user turn, bot response) pair is a user
/// turn immediately followed by a bot turn. Overlap is the shared token-type
/// fraction of the user turn (pairs with no user tokens are skipped); n-grams
/// are unigrams and bigrams over each pair's user tokens followed by its bot
/// tokens.
inline FeatureVector extract_features(const Conversation& c, const FeatureConfig& cfg = {}) {
  if (cfg.buckets == 0) throw ArgumentError("feature hashing needs at least one bucket");
  FeatureVector fv;
  fv.duration_s = c.duration_s();
  fv.num_turns = static_cast<double>(c.turns.size());
  std::map<std::uint32_t, double> counts;
  auto bump = [&](const std::string& key) { counts[static_cast<std::uint32_t>(text::fnv1a64(key) % cfg.buckets)] += 1.0; };
  double overlap_sum = 0.0, latency_sum = 0.0;
  std::size_t overlap_pairs = 0, pairs = 0;
  for (std::size_t t = 0; t + 1 < c.turns.size(); ++t) {
    if (c.turns[t].speaker != Speaker::user || c.turns[t + 1].speaker != Speaker::bot) continue;
    ++pairs;
    latency_sum += static_cast<double>(c.turns[t + 1].timestamp_ms - c.turns[t].timestamp_ms) / 1000.0;
    auto tokens = text::tokenize(c.turns[t].text);
    const std::set<std::string> user(tokens.begin(), tokens.end());
    const auto bot_tokens = text::tokenize(c.turns[t + 1].text);
    if (!user.empty()) {
      std::size_t shared = 0;
      const std::set<std::string> bot(bot_tokens.begin(), bot_tokens.end());
      for (const auto& w : user) shared += bot.contains(w);
      overlap_sum += static_cast<double>(shared) / static_cast<double>(user.size());
      ++overlap_pairs;
    }
    tokens.insert(tokens.end(), bot_tokens.begin(), bot_tokens.end());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      bump("1\x1f" + tokens[i]);
      if (i + 1 < tokens.size()) bump("2\x1f" + tokens[i] + "\x1f" + tokens[i + 1]);
    }
  }
  fv.token_overlap = overlap_pairs ? overlap_sum / static_cast<double>(overlap_pairs) : 0.0;
  fv.mean_response_time_s = pairs ? latency_sum / static_cast<double>(pairs) : 0.0;
  fv.ngrams.assign(counts.begin(), counts.end());
  return fv;
}

struct RatedExamples {
  std::vector<FeatureVector> features;
  std::vector<double> ratings;
  std::vector<std::string> conversation_ids;
};

/// Features and scores of every conversation rated by the given source.
inline RatedExamples rated_examples(const Corpus& corpus, const FeatureConfig& cfg = {},
                                    RatingSource source = RatingSource::user) {
  RatedExamples out;
  for (const auto& c : corpus.conversations()) {
    if (!c.rating || c.rating->source != source) continue;
    out.features.push_back(extract_features(c, cfg));
    out.ratings.push_back(c.rating->score);
    out.conversation_ids.push_back(c.conversation_id);
  }
  return out;
}

/// Seeded shuffle split; the test side gets round(n * fraction) examples,
/// kept within [1, n - 1].
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(std::size_t n, double test_fraction,
                                                                                      std::uint64_t seed) {
  if (n < 2) throw ArgumentError("a train/test split needs at least 2 examples");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ArgumentError("test fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(idx, rng);
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

// ---------------------------------------------------------------------------
// Trees

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;   // taken when value <= threshold
  int right = -1;
  double value = 0.0;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const FeatureVector& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x.value(static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
  }
  std::size_t depth(std::size_t i = 0) const {
    if (nodes.empty() || nodes[i].feature < 0) return 0;
    return 1 + std::max(depth(static_cast<std::size_t>(nodes[i].left)), depth(static_cast<std::size_t>(nodes[i].right)));
  }
  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct GbdtConfig {
  std::size_t trees = 200;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  std::size_t min_leaf = 5;
  std::uint64_t seed = 42;
  double subsample = 1.0;  // fraction of rows drawn without replacement per tree
  friend bool operator==(const GbdtConfig&, const GbdtConfig&) = default;
};

struct GbdtModel {
  GbdtConfig config;
  FeatureConfig features;
  double base = 0.0;
  std::vector<RegressionTree> trees;

  double predict(const FeatureVector& x, bool clamp_to_scale = false) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    const double y = base + config.learning_rate * s;
    return clamp_to_scale ? std::clamp(y, 1.0, 5.0) : y;
  }
  friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

struct GbdtTraining {
  GbdtModel model;
  std::vector<double> train_rmse;  // before any tree, then after each tree
};

namespace detail {

// Column-major view: for each feature the explicit (value, row) entries sorted
// by value. Dense columns list every row; bucket columns list only non-zero
// counts, the remaining rows implicitly hold 0, which sorts first.
struct ColumnStore {
  std::vector<std::vector<std::pair<double, std::uint32_t>>> columns;
  std::vector<bool> dense;
};

inline ColumnStore build_columns(std::span<const FeatureVector> xs, const FeatureConfig& cfg) {
  ColumnStore s;
  s.columns.resize(kDenseFeatures + cfg.buckets);
  s.dense.assign(s.columns.size(), false);
  for (std::size_t f = 0; f < kDenseFeatures; ++f) s.dense[f] = true;
  for (std::uint32_t r = 0; r < xs.size(); ++r) {
    for (std::size_t f = 0; f < kDenseFeatures; ++f) s.columns[f].emplace_back(xs[r].value(f), r);
    for (const auto& [b, v] : xs[r].ngrams) {
      if (b >= cfg.buckets) throw ArgumentError("feature bucket outside the configured range");
      if (!(v > 0.0)) throw ArgumentError("n-gram counts must be positive");
      s.columns[kDenseFeatures + b].emplace_back(v, r);
    }
  }
  for (auto& c : s.columns) std::sort(c.begin(), c.end());
  return s;
}

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Grow one tree level by level. `node_of[r]` is the open node of row r or -1.
inline RegressionTree fit_tree(std::span<const FeatureVector> xs, const ColumnStore& cols, std::span<const double> residual,
                               const std::vector<std::uint32_t>& rows, const GbdtConfig& cfg) {
  RegressionTree tree;
  const std::size_t n_rows = residual.size();
  std::vector<int> node_of(n_rows, -1);
  double total = 0.0;
  for (auto r : rows) {
    node_of[r] = 0;
    total += residual[r];
  }
  struct Open {
    std::size_t node;
    std::size_t count;
    double sum;
  };
  tree.nodes.push_back({-1, 0.0, -1, -1, total / static_cast<double>(rows.size())});
  std::vector<Open> open = {{0, rows.size(), total}};

  for (std::size_t depth = 0; depth < cfg.max_depth && !open.empty(); ++depth) {
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < open.size(); ++k) slot[open[k].node] = static_cast<int>(k);
    std::vector<SplitCandidate> best(open.size());
    std::vector<std::size_t> exp_n(open.size());
    std::vector<double> exp_sum(open.size()), left_sum(open.size()), last(open.size());
    std::vector<std::size_t> left_n(open.size());

    for (std::size_t f = 0; f < cols.columns.size(); ++f) {
      const auto& col = cols.columns[f];
      if (col.empty()) continue;
      std::fill(exp_n.begin(), exp_n.end(), 0);
      std::fill(exp_sum.begin(), exp_sum.end(), 0.0);
      if (!cols.dense[f]) {
        for (const auto& [v, r] : col) {
          const int nd = node_of[r];
          if (nd < 0 || slot[static_cast<std::size_t>(nd)] < 0) continue;
          const auto k = static_cast<std::size_t>(slot[static_cast<std::size_t>(nd)]);
          ++exp_n[k];
          exp_sum[k] += residual[r];
        }
      }
      for (std::size_t k = 0; k < open.size(); ++k) {
        // The implicit-zero group starts on the left.
        left_n[k] = cols.dense[f] ? 0 : open[k].count - exp_n[k];
        left_sum[k] = cols.dense[f] ? 0.0 : open[k].sum - exp_sum[k];
        last[k] = 0.0;
      }
      auto consider = [&](std::size_t k, double next_value) {
        const std::size_t nl = left_n[k], nr = open[k].count - nl;
        if (nl < cfg.min_leaf || nr < cfg.min_leaf) return;
        const double sl = left_sum[k], sr = open[k].sum - sl;
        const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                            open[k].sum * open[k].sum / static_cast<double>(open[k].count);
        if (gain > best[k].gain) best[k] = {gain, static_cast<int>(f), 0.5 * (last[k] + next_value)};
      };
      for (const auto& [v, r] : col) {
        const int nd = node_of[r];
        if (nd < 0 || slot[static_cast<std::size_t>(nd)] < 0) continue;
        const auto k = static_cast<std::size_t>(slot[static_cast<std::size_t>(nd)]);
        if (left_n[k] > 0 && v != last[k]) consider(k, v);
        ++left_n[k];
        left_sum[k] += residual[r];
        last[k] = v;
      }
    }

    std::vector<Open> next;
    for (std::size_t k = 0; k < open.size(); ++k) {
      const auto& b = best[k];
      // Gains below rounding noise of the node's sum of squares are not splits.
      if (b.feature < 0 || !(b.gain > 1e-12 * (1.0 + std::abs(open[k].sum)))) continue;
      const auto parent = open[k].node;
      const auto li = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      tree.nodes[parent].feature = b.feature;
      tree.nodes[parent].threshold = b.threshold;
      tree.nodes[parent].left = li;
      tree.nodes[parent].right = li + 1;
      next.push_back({static_cast<std::size_t>(li), 0, 0.0});
      next.push_back({static_cast<std::size_t>(li) + 1, 0, 0.0});
    }
    // Route rows of split nodes to their children.
    std::vector<int> child_slot(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < next.size(); ++k) child_slot[next[k].node] = static_cast<int>(k);
    for (auto r : rows) {
      const int nd = node_of[r];
      if (nd < 0) continue;
      const auto& n = tree.nodes[static_cast<std::size_t>(nd)];
      if (n.feature < 0) {
        node_of[r] = -1;  // settled in a leaf
        continue;
      }
      const double v = xs[r].value(static_cast<std::size_t>(n.feature));
      const int child = v <= n.threshold ? n.left : n.right;
      node_of[r] = child;
      auto& o = next[static_cast<std::size_t>(child_slot[static_cast<std::size_t>(child)])];
      ++o.count;
      o.sum += residual[r];
    }
    for (auto& o : next) tree.nodes[o.node].value = o.sum / static_cast<double>(o.count);
    open = std::move(next);
  }
  return tree;
}

inline double sse(std::span<const double> pred, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
  return s;
}

}  // namespace detail

/// Squared-loss boosting: each tree is fitted to the current residuals by
/// greedy SSE-reducing splits `x <= threshold` (thresholds are midpoints of
/// adjacent distinct values; ties prefer the lowest feature, then the lowest
/// threshold). A tree that would raise the training error through rounding
/// is replaced by a zero leaf, so the training RMSE never increases.
inline GbdtTraining train_gbdt_with_history(std::span<const FeatureVector> xs, std::span<const double> ys,
                                            const GbdtConfig& cfg = {}, const FeatureConfig& features = {}) {
  if (xs.empty()) throw ArgumentError("no training examples");
  if (xs.size() != ys.size()) throw ArgumentError("features and ratings differ in length");
  if (cfg.min_leaf == 0) throw ArgumentError("min_leaf must be at least 1");
  if (xs.size() < 2 * cfg.min_leaf) throw ArgumentError("need at least 2 * min_leaf examples");
  if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0)) throw ArgumentError("learning rate must lie in (0, 1]");
  if (!(cfg.subsample > 0.0 && cfg.subsample <= 1.0)) throw ArgumentError("subsample must lie in (0, 1]");
  for (double y : ys) {
    if (!std::isfinite(y)) throw ArgumentError("non-finite rating");
  }

  GbdtTraining out;
  out.model.config = cfg;
  out.model.features = features;
  out.model.base = stats::mean(ys);
  const auto cols = detail::build_columns(xs, features);
  std::vector<double> pred(xs.size(), out.model.base), residual(xs.size()), sum(xs.size(), 0.0);
  double current = detail::sse(pred, ys);
  const auto n = static_cast<double>(xs.size());
  out.train_rmse.push_back(std::sqrt(current / n));
  Rng rng(cfg.seed);
  std::vector<std::uint32_t> all(xs.size());
  std::iota(all.begin(), all.end(), std::uint32_t{0});

  for (std::size_t t = 0; t < cfg.trees; ++t) {
    for (std::size_t i = 0; i < xs.size(); ++i) residual[i] = ys[i] - pred[i];
    std::vector<std::uint32_t> rows = all;
    if (cfg.subsample < 1.0) {
      shuffle(rows, rng);
      const auto k = std::max<std::size_t>(2 * cfg.min_leaf,
                                           static_cast<std::size_t>(std::llround(cfg.subsample * n)));
      rows.resize(std::min(rows.size(), k));
      std::sort(rows.begin(), rows.end());
    }
    auto tree = detail::fit_tree(xs, cols, residual, rows, cfg);
    std::vector<double> candidate_sum(xs.size()), candidate(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      candidate_sum[i] = sum[i] + tree.predict(xs[i]);
      candidate[i] = out.model.base + cfg.learning_rate * candidate_sum[i];
    }
    const double next = detail::sse(candidate, ys);
    if (next > current) {
      tree.nodes = {TreeNode{}};
    } else {
      sum = std::move(candidate_sum);
      pred = std::move(candidate);
      current = next;
    }
    out.model.trees.push_back(std::move(tree));
    out.train_rmse.push_back(std::sqrt(current / n));
  }
  return out;
}

inline GbdtModel train_gbdt(std::span<const FeatureVector> xs, std::span<const double> ys, const GbdtConfig& cfg = {},
                            const FeatureConfig& features = {}) {
  return train_gbdt_with_history(xs, ys, cfg, features).model;
}

// ---------------------------------------------------------------------------
// Evaluation

struct PredictorEval {
  double rmse = 0.0;
  std::optional<stats::CorrelationResult> spearman;  // absent when degenerate
  std::optional<stats::CorrelationResult> pearson;
  std::size_t n = 0;
};

/// RMSE and correlations of predictions against ratings. Correlations are
/// absent when either side is constant or fewer than 3 pairs exist.
inline PredictorEval evaluate_predictions(std::span<const double> predicted, std::span<const double> actual) {
  PredictorEval e;
  e.rmse = stats::rmse(predicted, actual);
  e.n = actual.size();
  try {
    e.pearson = stats::pearson(predicted, actual);
  } catch (const DegenerateInputError&) {
  } catch (const ArgumentError&) {
  }
  try {
    e.spearman = stats::spearman(predicted, actual);
  } catch (const DegenerateInputError&) {
  } catch (const ArgumentError&) {
  }
  return e;
}

inline PredictorEval evaluate(const GbdtModel& model, std::span<const FeatureVector> xs, std::span<const double> ys,
                              bool clamp_to_scale = false) {
  if (xs.empty()) throw ArgumentError("empty holdout set");
  if (xs.size() != ys.size()) throw ArgumentError("features and ratings differ in length");
  std::vector<double> pred;
  pred.reserve(xs.size());
  for (const auto& x : xs) pred.push_back(model.predict(x, clamp_to_scale));
  return evaluate_predictions(pred, ys);
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr const char* kModelFormat = "convoeval-gbdt";
inline constexpr int kModelVersion = 1;

inline nlohmann::ordered_json to_json(const GbdtModel& m) {
  nlohmann::ordered_json trees = nlohmann::ordered_json::array();
  for (const auto& t : m.trees) {
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    trees.push_back(nodes);
  }
  return {{"format", kModelFormat},
          {"version", kModelVersion},
          {"config",
           {{"trees", m.config.trees},
            {"max_depth", m.config.max_depth},
            {"learning_rate", m.config.learning_rate},
            {"min_leaf", m.config.min_leaf},
            {"seed", m.config.seed},
            {"subsample", m.config.subsample}}},
          {"features", {{"buckets", m.features.buckets}, {"dense", dense_feature_names()}, {"hash", "fnv1a64"}}},
          {"base", m.base},
          {"trees", trees}};
}

inline GbdtModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw SchemaError("not a GBDT model document");
    if (j.at("version").get<int>() != kModelVersion) throw SchemaError("unsupported GBDT model version");
    GbdtModel m;
    const auto& c = j.at("config");
    m.config.trees = c.at("trees").get<std::size_t>();
    m.config.max_depth = c.at("max_depth").get<std::size_t>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.min_leaf = c.at("min_leaf").get<std::size_t>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.subsample = c.at("subsample").get<double>();
    m.features.buckets = j.at("features").at("buckets").get<std::uint32_t>();
    m.base = j.at("base").get<double>();
    const auto dim = static_cast<int>(kDenseFeatures + m.features.buckets);
    for (const auto& t : j.at("trees")) {
      RegressionTree tree;
      for (const auto& n : t) {
        tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                              n.at(4).get<double>()});
      }
      const auto size = static_cast<int>(tree.nodes.size());
      if (size == 0) throw SchemaError("empty tree");
      for (int i = 0; i < size; ++i) {
        const auto& n = tree.nodes[static_cast<std::size_t>(i)];
        if (n.feature >= dim || (n.feature >= 0 && (n.left <= i || n.right <= i || n.left >= size || n.right >= size))) {
          throw SchemaError("tree node out of range");
        }
      }
      m.trees.push_back(std::move(tree));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed GBDT model: ") + e.what());
  }
}

}  // namespace convoeval::predictor
