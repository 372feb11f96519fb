// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Per-bot metric matrix: coherence, engagement, depth, domain coverage and
// topical diversity, each with a percentile bootstrap interval computed by
// resampling the bot's conversations.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "convoeval/corpus.hpp"
#include "convoeval/error.hpp"
#include "convoeval/random.hpp"
#include "convoeval/stats.hpp"
#include "convoeval/text.hpp"
#include "convoeval/topics.hpp"

namespace convoeval::metrics {

enum class Orientation { higher_is_better, lower_is_better, descriptive };

inline const char* to_string(Orientation o) noexcept {
  switch (o) {
    case Orientation::higher_is_better: return "higher_is_better";
    case Orientation::lower_is_better: return "lower_is_better";
    case Orientation::descriptive: return "descriptive";
  }
  return "descriptive";
}

inline std::optional<Orientation> parse_orientation(std::string_view s) noexcept {
  if (s == "higher_is_better") return Orientation::higher_is_better;
  if (s == "lower_is_better") return Orientation::lower_is_better;
  if (s == "descriptive") return Orientation::descriptive;
  return std::nullopt;
}

struct MetricInfo {
  std::string name;
  Orientation orientation = Orientation::higher_is_better;
  std::string label;  // human-readable row label
  friend bool operator==(const MetricInfo&, const MetricInfo&) = default;
};

namespace names {
inline constexpr const char* rer = "rer";
inline constexpr const char* mean_user_rating = "mean_user_rating";
inline constexpr const char* mean_frequent_user_rating = "mean_frequent_user_rating";
inline constexpr const char* mean_eer = "mean_eer";
inline constexpr const char* median_duration_s = "median_duration_s";
inline constexpr const char* median_turns = "median_turns";
inline constexpr const char* mean_depth = "mean_depth";
inline constexpr const char* domain_entropy_bits = "domain_entropy_bits";
inline constexpr const char* rating_std_across_domains = "rating_std_across_domains";
inline constexpr const char* r_cov = "r_cov";
inline constexpr const char* topical_vocab_size = "topical_vocab_size";
inline constexpr const char* mean_topic_frequency = "mean_topic_frequency";
}  // namespace names

/// All metric columns in matrix order. RER is the only lower-is-better
/// metric; the rating spread is reported but not ranked on its own since
/// R-COV already folds it in.
inline const std::vector<MetricInfo>& metric_catalog() {
  static const std::vector<MetricInfo> catalog = {
      {names::rer, Orientation::lower_is_better, "Coherence: RER"},
      {names::mean_user_rating, Orientation::higher_is_better, "CUX: Mean User Rating"},
      {names::mean_frequent_user_rating, Orientation::higher_is_better, "CUX: Mean Frequent User Rating"},
      {names::mean_eer, Orientation::higher_is_better, "Engagement: Mean EER"},
      {names::median_duration_s, Orientation::higher_is_better, "Engagement: Median Duration (s)"},
      {names::median_turns, Orientation::higher_is_better, "Engagement: Median Turns"},
      {names::mean_depth, Orientation::higher_is_better, "Conv. Depth: Mean Depth"},
      {names::domain_entropy_bits, Orientation::higher_is_better, "Domain Coverage: Entropy"},
      {names::rating_std_across_domains, Orientation::descriptive, "Domain Coverage: Rating STD"},
      {names::r_cov, Orientation::higher_is_better, "Domain Coverage: R-COV"},
      {names::topical_vocab_size, Orientation::higher_is_better, "Topical Diversity: Vocab Size"},
      {names::mean_topic_frequency, Orientation::higher_is_better, "Topical Diversity: Mean Freq"},
  };
  return catalog;
}

inline const MetricInfo& metric_info(std::string_view name) {
  for (const auto& m : metric_catalog()) {
    if (m.name == name) return m;
  }
  throw ArgumentError("unknown metric '" + std::string(name) + "'");
}

/// The ten rows that enter unification by default.
inline std::vector<std::string> default_unification_metrics() {
  return {names::rer,          names::mean_user_rating, names::mean_frequent_user_rating,
          names::mean_eer,     names::median_duration_s, names::median_turns,
          names::mean_depth,   names::r_cov,             names::topical_vocab_size,
          names::mean_topic_frequency};
}

using Cell = std::optional<stats::ConfidenceInterval>;

/// Bots × metrics. Absent cells are undefined metrics, never zeros.
struct MetricMatrix {
  std::vector<std::string> bots;
  std::vector<MetricInfo> metrics;
  std::vector<std::vector<Cell>> cells;  // [bot][metric]
  double level = 0.95;

  std::optional<std::size_t> bot_index(std::string_view bot) const {
    for (std::size_t i = 0; i < bots.size(); ++i) {
      if (bots[i] == bot) return i;
    }
    return std::nullopt;
  }
  std::optional<std::size_t> metric_index(std::string_view metric) const {
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      if (metrics[i].name == metric) return i;
    }
    return std::nullopt;
  }
  const Cell& at(std::string_view bot, std::string_view metric) const {
    const auto b = bot_index(bot);
    const auto m = metric_index(metric);
    if (!b) throw ArgumentError("unknown bot '" + std::string(bot) + "'");
    if (!m) throw ArgumentError("unknown metric '" + std::string(metric) + "'");
    return cells[*b][*m];
  }
  /// Point estimates of one metric in bot order.
  std::vector<std::optional<double>> column(std::size_t metric) const {
    std::vector<std::optional<double>> out;
    for (const auto& row : cells) out.push_back(row[metric] ? std::optional<double>(row[metric]->point) : std::nullopt);
    return out;
  }
  /// Restrict to the named metrics, in the given order.
  MetricMatrix select(std::span<const std::string> names) const {
    MetricMatrix out{bots, {}, std::vector<std::vector<Cell>>(bots.size()), level};
    for (const auto& n : names) {
      const auto m = metric_index(n);
      if (!m) throw ArgumentError("matrix has no metric '" + n + "'");
      out.metrics.push_back(metrics[*m]);
      for (std::size_t b = 0; b < bots.size(); ++b) out.cells[b].push_back(cells[b][*m]);
    }
    return out;
  }
  friend bool operator==(const MetricMatrix&, const MetricMatrix&) = default;
};

enum class RerDenominator { annotated_bot_turns, all_annotated_turns };
enum class RcovMode { bot_entropy, mean_conversation_entropy };

struct MetricConfig {
  double level = 0.95;
  std::size_t resamples = 2000;
  std::uint64_t seed = 42;
  RerDenominator rer_denominator = RerDenominator::annotated_bot_turns;
  topics::TurnSelection depth_turns = topics::TurnSelection::both;
  bool diversity_include_user = false;
  RcovMode rcov_mode = RcovMode::bot_entropy;
  std::vector<std::string> spread_domains = topics::default_spread_domains();
  std::size_t frequent_user_min_conversations = 2;
};

// ---------------------------------------------------------------------------
// Per-conversation building blocks

/// Mean maximal-run length of a domain sequence; undefined when empty.
inline std::optional<double> conversation_depth(std::span<const topics::DomainIndex> sequence) {
  if (sequence.empty()) return std::nullopt;
  const auto runs = topics::maximal_runs(sequence);
  return static_cast<double>(sequence.size()) / static_cast<double>(runs.size());
}

struct AnnotationCounts {
  std::size_t incoherent = 0;
  std::size_t denominator = 0;
};

struct IndexedAnnotations {
  std::vector<AnnotationCounts> per_conversation;  // corpus order
  std::size_t skipped_unknown = 0;
};

/// Count annotations per conversation. Records for unknown conversations are
/// skipped and counted; an out-of-range turn index is a ValidationError. A
/// later record for the same turn replaces an earlier one.
inline IndexedAnnotations index_annotations(const Corpus& corpus, std::span<const CoherenceAnnotation> annotations,
                                            RerDenominator mode = RerDenominator::annotated_bot_turns) {
  std::vector<std::map<std::size_t, CoherenceLabel>> labels(corpus.size());
  IndexedAnnotations out;
  for (const auto& a : annotations) {
    const auto pos = corpus.find(a.conversation_id);
    if (!pos) {
      ++out.skipped_unknown;
      continue;
    }
    if (a.turn_index >= corpus[*pos].turns.size()) {
      throw ValidationError("annotation for '" + a.conversation_id + "' cites turn " + std::to_string(a.turn_index) +
                            " but the conversation has " + std::to_string(corpus[*pos].turns.size()) + " turns");
    }
    labels[*pos][a.turn_index] = a.label;
  }
  out.per_conversation.resize(corpus.size());
  for (std::size_t c = 0; c < corpus.size(); ++c) {
    for (const auto& [turn, label] : labels[c]) {
      const bool bot_turn = corpus[c].turns[turn].speaker == Speaker::bot;
      if (mode == RerDenominator::annotated_bot_turns && !bot_turn) continue;
      ++out.per_conversation[c].denominator;
      if (bot_turn && label == CoherenceLabel::incoherent) ++out.per_conversation[c].incoherent;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix assembly

namespace detail {

struct BotData {
  std::vector<std::size_t> conversations;  // corpus positions
  std::vector<AnnotationCounts> annotations;
  std::vector<double> durations, turns;
  std::vector<std::optional<double>> depth;
  std::vector<topics::DomainIndex> domain;
  std::vector<double> conversation_entropy;
  std::vector<std::optional<int>> user_rating;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> keywords;  // (keyword id, count)
};

inline std::optional<double> mean_of(std::span<const std::size_t> idx, std::span<const double> xs) {
  if (idx.empty()) return std::nullopt;
  const double origin = xs[idx.front()];
  double acc = 0.0;
  for (auto i : idx) acc += xs[i] - origin;
  return origin + acc / static_cast<double>(idx.size());
}

inline std::optional<double> median_of(std::span<const std::size_t> idx, std::span<const double> xs) {
  if (idx.empty()) return std::nullopt;
  std::vector<double> v;
  v.reserve(idx.size());
  for (auto i : idx) v.push_back(xs[i]);
  std::sort(v.begin(), v.end());
  return stats::quantile_sorted(v, 0.5);
}

inline std::optional<double> rating_spread(std::span<const std::size_t> idx, const BotData& d,
                                           std::span<const std::optional<std::size_t>> spread_slot,
                                           std::size_t slots) {
  std::vector<double> sum(slots, 0.0);
  std::vector<std::size_t> count(slots, 0);
  for (auto i : idx) {
    if (!d.user_rating[i]) continue;
    if (auto s = spread_slot[d.domain[i]]) {
      sum[*s] += *d.user_rating[i];
      ++count[*s];
    }
  }
  std::vector<double> means;
  for (std::size_t s = 0; s < slots; ++s) {
    if (count[s] > 0) means.push_back(sum[s] / static_cast<double>(count[s]));
  }
  if (means.size() < 2) return std::nullopt;
  return stats::population_std(means);
}

inline std::optional<double> domain_entropy(std::span<const std::size_t> idx, const BotData& d, std::size_t domains) {
  if (idx.empty()) return std::nullopt;
  std::vector<double> counts(domains, 0.0);
  for (auto i : idx) counts[d.domain[i]] += 1.0;
  return stats::shannon_entropy(counts);
}

}  // namespace detail

/// Compute every metric in `metric_catalog()` for every bot in the corpus.
/// `annotated` must come from `topics::annotate_corpus` on the same corpus.
inline MetricMatrix metric_matrix(const Corpus& corpus, std::span<const CoherenceAnnotation> annotations,
                                  const topics::DomainAnnotatedCorpus& annotated, const topics::TopicLexicon& lexicon,
                                  const MetricConfig& config = {}) {
  if (annotated.predictions.size() != corpus.size()) throw ArgumentError("domain annotations do not match the corpus");
  if (!(config.level > 0.0 && config.level < 1.0)) throw ArgumentError("confidence level must lie in (0, 1)");
  const auto& domains = annotated.domains;
  std::vector<std::optional<std::size_t>> spread_slot(domains.size());
  for (std::size_t s = 0; s < config.spread_domains.size(); ++s) {
    const auto d = domains.find(config.spread_domains[s]);
    if (!d) throw ArgumentError("spread domain '" + config.spread_domains[s] + "' is not in the domain set");
    spread_slot[*d] = s;
  }

  const auto counts = index_annotations(corpus, annotations, config.rer_denominator);
  const auto frequent = frequent_user_ratings(corpus, config.frequent_user_min_conversations);
  std::map<std::string, std::size_t> keyword_ids;
  for (const auto& kw : lexicon.all_keywords()) keyword_ids.emplace(kw, keyword_ids.size());

  MetricMatrix matrix;
  matrix.bots = corpus.bots();
  matrix.metrics = metric_catalog();
  matrix.level = config.level;
  const auto& catalog = metric_catalog();
  auto metric_pos = [&](const char* name) {
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      if (catalog[i].name == name) return i;
    }
    return catalog.size();
  };

  for (const auto& bot : matrix.bots) {
    detail::BotData d;
    const auto positions = corpus.conversations_of_bot(bot);
    d.conversations.assign(positions.begin(), positions.end());
    const std::size_t n = d.conversations.size();
    std::vector<double> eer;
    for (auto pos : d.conversations) {
      const auto& c = corpus[pos];
      d.annotations.push_back(counts.per_conversation[pos]);
      d.durations.push_back(c.duration_s());
      d.turns.push_back(static_cast<double>(c.turns.size()));
      d.depth.push_back(conversation_depth(annotated.sequence(corpus, pos, config.depth_turns)));
      const auto all = annotated.sequence(corpus, pos, topics::TurnSelection::both);
      d.domain.push_back(all.empty() ? topics::DomainIndex{0} : topics::conversation_domain(all));
      if (all.empty()) {
        d.conversation_entropy.push_back(0.0);
      } else {
        std::vector<double> hist(domains.size(), 0.0);
        for (auto x : all) hist[x] += 1.0;
        d.conversation_entropy.push_back(stats::shannon_entropy(hist));
      }
      d.user_rating.push_back(c.rating && c.rating->source == RatingSource::user
                                  ? std::optional<int>(c.rating->score)
                                  : std::nullopt);
      if (c.rating && c.rating->source == RatingSource::engagement_evaluator) eer.push_back(c.rating->score);
      std::map<std::size_t, std::size_t> kw;
      for (const auto& t : c.turns) {
        if (t.speaker == Speaker::user && !config.diversity_include_user) continue;
        for (const auto& [word, k] : topics::keyword_occurrences(t.text, lexicon)) kw[keyword_ids.at(word)] += k;
      }
      d.keywords.emplace_back(kw.begin(), kw.end());
    }

    std::vector<Cell> row(catalog.size());
    const std::uint64_t bot_key = text::fnv1a64(bot);
    auto opts = [&](std::size_t metric) {
      return stats::BootstrapOptions{config.level, config.resamples, derive_seed(config.seed, {bot_key, metric})};
    };
    auto sample_ci = [&](std::size_t metric, const std::vector<double>& xs) -> Cell {
      if (xs.empty()) return std::nullopt;
      return stats::bootstrap_ci(xs, opts(metric));
    };

    // Coherence.
    row[metric_pos(names::rer)] = stats::bootstrap_statistic(
        n,
        [&](std::span<const std::size_t> idx) -> std::optional<double> {
          std::size_t inc = 0, den = 0;
          for (auto i : idx) {
            inc += d.annotations[i].incoherent;
            den += d.annotations[i].denominator;
          }
          if (den == 0) return std::nullopt;
          return static_cast<double>(inc) / static_cast<double>(den);
        },
        opts(metric_pos(names::rer)));

    // Ratings.
    std::vector<double> user;
    for (const auto& r : d.user_rating) {
      if (r) user.push_back(*r);
    }
    row[metric_pos(names::mean_user_rating)] = sample_ci(metric_pos(names::mean_user_rating), user);
    std::vector<double> freq;
    if (auto it = frequent.find(bot); it != frequent.end()) {
      for (const auto& r : it->second) freq.push_back(r.score);
    }
    row[metric_pos(names::mean_frequent_user_rating)] = sample_ci(metric_pos(names::mean_frequent_user_rating), freq);
    row[metric_pos(names::mean_eer)] = sample_ci(metric_pos(names::mean_eer), eer);

    // Engagement.
    row[metric_pos(names::median_duration_s)] = stats::bootstrap_statistic(
        n, [&](std::span<const std::size_t> idx) { return detail::median_of(idx, d.durations); },
        opts(metric_pos(names::median_duration_s)));
    row[metric_pos(names::median_turns)] = stats::bootstrap_statistic(
        n, [&](std::span<const std::size_t> idx) { return detail::median_of(idx, d.turns); },
        opts(metric_pos(names::median_turns)));

    // Depth.
    std::vector<double> depths;
    for (const auto& x : d.depth) {
      if (x) depths.push_back(*x);
    }
    row[metric_pos(names::mean_depth)] = sample_ci(metric_pos(names::mean_depth), depths);

    // Domain coverage.
    const std::size_t slots = config.spread_domains.size();
    row[metric_pos(names::domain_entropy_bits)] = stats::bootstrap_statistic(
        n, [&](std::span<const std::size_t> idx) { return detail::domain_entropy(idx, d, domains.size()); },
        opts(metric_pos(names::domain_entropy_bits)));
    row[metric_pos(names::rating_std_across_domains)] = stats::bootstrap_statistic(
        n, [&](std::span<const std::size_t> idx) { return detail::rating_spread(idx, d, spread_slot, slots); },
        opts(metric_pos(names::rating_std_across_domains)));
    row[metric_pos(names::r_cov)] = stats::bootstrap_statistic(
        n,
        [&](std::span<const std::size_t> idx) -> std::optional<double> {
          const auto spread = detail::rating_spread(idx, d, spread_slot, slots);
          if (!spread || *spread <= 0.0) return std::nullopt;
          const auto h = config.rcov_mode == RcovMode::bot_entropy
                             ? detail::domain_entropy(idx, d, domains.size())
                             : detail::mean_of(idx, d.conversation_entropy);
          if (!h) return std::nullopt;
          return *h / *spread;
        },
        opts(metric_pos(names::r_cov)));

    // Topical diversity.
    std::vector<std::size_t> tally(keyword_ids.size(), 0);
    auto diversity = [&](std::span<const std::size_t> idx, bool frequency) -> std::optional<double> {
      std::fill(tally.begin(), tally.end(), 0);
      std::size_t distinct = 0, total = 0;
      for (auto i : idx) {
        for (const auto& [k, cnt] : d.keywords[i]) {
          if (tally[k] == 0) ++distinct;
          tally[k] += cnt;
          total += cnt;
        }
      }
      if (!frequency) return static_cast<double>(distinct);
      if (distinct == 0) return std::nullopt;
      return static_cast<double>(total) / static_cast<double>(distinct);
    };
    row[metric_pos(names::topical_vocab_size)] = stats::bootstrap_statistic(
        n, [&](std::span<const std::size_t> idx) { return diversity(idx, false); },
        opts(metric_pos(names::topical_vocab_size)));
    row[metric_pos(names::mean_topic_frequency)] = stats::bootstrap_statistic(
        n, [&](std::span<const std::size_t> idx) { return diversity(idx, true); },
        opts(metric_pos(names::mean_topic_frequency)));

    matrix.cells.push_back(std::move(row));
  }
  return matrix;
}

/// Classify every turn with `classifier`, then build the matrix.
template <topics::TopicClassifier C>
MetricMatrix metric_matrix(const Corpus& corpus, std::span<const CoherenceAnnotation> annotations,
                           const C& classifier, const topics::TopicLexicon& lexicon, const MetricConfig& config = {}) {
  return metric_matrix(corpus, annotations, topics::annotate_corpus(corpus, classifier), lexicon, config);
}

// ---------------------------------------------------------------------------
// Export

inline constexpr const char* kMatrixFormat = "convoeval-metric-matrix";
inline constexpr int kMatrixVersion = 1;

inline nlohmann::ordered_json to_json(const MetricMatrix& m) {
  nlohmann::ordered_json metrics = nlohmann::ordered_json::array();
  for (const auto& info : m.metrics) {
    metrics.push_back({{"name", info.name}, {"orientation", to_string(info.orientation)}, {"label", info.label}});
  }
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t b = 0; b < m.bots.size(); ++b) {
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < m.metrics.size(); ++k) {
      const auto& cell = m.cells[b][k];
      values[m.metrics[k].name] =
          cell ? nlohmann::ordered_json{{"point", cell->point}, {"ci_lo", cell->lower}, {"ci_hi", cell->upper}}
               : nlohmann::ordered_json(nullptr);
    }
    rows.push_back({{"bot", m.bots[b]}, {"values", values}});
  }
  return {{"format", kMatrixFormat}, {"version", kMatrixVersion}, {"level", m.level}, {"metrics", metrics},
          {"rows", rows}};
}

inline MetricMatrix matrix_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kMatrixFormat) throw SchemaError("not a metric matrix document");
    if (j.at("version").get<int>() != kMatrixVersion) throw SchemaError("unsupported metric matrix version");
    MetricMatrix m;
    m.level = j.at("level").get<double>();
    for (const auto& info : j.at("metrics")) {
      const auto o = parse_orientation(info.at("orientation").get<std::string>());
      if (!o) throw SchemaError("unknown orientation for metric '" + info.at("name").get<std::string>() + "'");
      m.metrics.push_back({info.at("name").get<std::string>(), *o, info.value("label", info.at("name").get<std::string>())});
    }
    for (const auto& row : j.at("rows")) {
      m.bots.push_back(row.at("bot").get<std::string>());
      std::vector<Cell> cells;
      const auto& values = row.at("values");
      for (const auto& info : m.metrics) {
        const auto& v = values.at(info.name);
        if (v.is_null()) {
          cells.emplace_back(std::nullopt);
          continue;
        }
        stats::ConfidenceInterval ci;
        ci.point = v.at("point").get<double>();
        ci.lower = v.at("ci_lo").get<double>();
        ci.upper = v.at("ci_hi").get<double>();
        ci.level = m.level;
        cells.emplace_back(ci);
      }
      m.cells.push_back(std::move(cells));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed metric matrix: ") + e.what());
  }
}

/// Shortest round-trip decimal form.
inline std::string format_number(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

/// Long-format CSV: one line per (bot, metric); undefined cells leave the
/// numeric fields empty.
inline void write_csv(std::ostream& out, const MetricMatrix& m) {
  out << "bot,metric,point,ci_lo,ci_hi\n";
  for (std::size_t b = 0; b < m.bots.size(); ++b) {
    for (std::size_t k = 0; k < m.metrics.size(); ++k) {
      out << m.bots[b] << ',' << m.metrics[k].name << ',';
      if (const auto& c = m.cells[b][k]) {
        out << format_number(c->point) << ',' << format_number(c->lower) << ',' << format_number(c->upper);
      } else {
        out << ",,";
      }
      out << '\n';
    }
  }
}

}  // namespace convoeval::metrics
