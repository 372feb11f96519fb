// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Seeded synthetic corpora with planted bot quality.
//
// Turn domains follow a Markov chain: with probability `depth_persistence`
// a turn stays in the previous turn's domain, otherwise it jumps to a
// different domain d' with probability proportional to domain_distribution[d'].
// Because jumps always leave the current domain, run lengths are geometric
// with mean 1/(1 - persistence), and the chain is reversible with stationary
// law s_d proportional to pi_d (1 - pi_d). Conversations start in the
// stationary law, so every run's domain (and hence the longest run's domain)
// is distributed as s.
//
// Utterances are filler stopwords plus keywords from the current domain's
// pool, so lexicon classification recovers the planted domains exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "convoeval/corpus.hpp"
#include "convoeval/error.hpp"
#include "convoeval/random.hpp"
#include "convoeval/stats.hpp"
#include "convoeval/topics.hpp"

namespace convoeval::synth {

struct TurnCountModel {
  double median = 12.0;
  double dispersion = 3.0;  // sd of the normal before rounding
};

/// Per-conversation rating mean:
///   intercept + w_incoherence * (incoherent fraction of bot turns)
///             + w_depth * (conversation depth) + w_breadth * (planted entropy, bits)
///             + domain_offsets[conversation domain]
/// plus N(0, noise_sd), rounded and clamped to [1, 5].
struct RatingModel {
  double intercept = 2.0;
  double w_incoherence = -3.0;
  double w_depth = 0.3;
  double w_breadth = 0.2;
  double noise_sd = 0.7;
  std::map<std::string, double> domain_offsets;
};

struct BotQualityProfile {
  std::string bot_id;
  double incoherence_prob = 0.1;
  std::map<std::string, double> domain_distribution;  // jump weights by domain name
  double depth_persistence = 0.5;
  /// Keywords per domain; domains without an entry use the lexicon's keywords.
  std::map<std::string, std::vector<std::string>> keyword_pool;
  TurnCountModel turn_count;
  RatingModel rating_model;
  double keywords_per_bot_turn = 1.0;  // expected keywords in a coherent response beyond any echo
  double rated_fraction = 1.0;
  double evaluator_fraction = 0.1;  // share of ratings given by engagement evaluators
  double evaluator_offset = -0.6;
  double response_time_s = 1.5;     // mean bot latency
  double user_gap_s = 5.5;          // mean time a user takes to reply
  std::size_t user_pool = 0;        // distinct users per bot; 0 means conversations/2
};

/// Planted values for one bot.
struct PlantedBot {
  std::string bot_id;
  double true_rer = 0.0;
  double true_entropy_bits = 0.0;   // entropy of the stationary domain law
  double expected_depth = 0.0;      // 1 / (1 - persistence)
  double expected_depth_finite = 0.0;  // accounts for run truncation at conversation end
  double expected_rating = 0.0;
  std::map<std::string, double> stationary;  // domain name -> probability
};

struct PlantedConversation {
  std::vector<topics::DomainIndex> domains;  // per turn
  std::vector<bool> incoherent;              // per turn; always false for user turns
};

struct GroundTruth {
  std::vector<PlantedBot> bots;
  std::vector<PlantedConversation> conversations;  // corpus order
};

struct GeneratedCorpus {
  Corpus corpus;
  std::vector<CoherenceAnnotation> annotations;
  GroundTruth truth;
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct ResolvedProfile {
  std::vector<double> jump;        // by domain index
  std::vector<double> stationary;  // by domain index
  std::vector<std::vector<std::string>> pools;
  std::vector<double> offsets;
};

inline ResolvedProfile resolve(const BotQualityProfile& p, const topics::TopicLexicon& lexicon) {
  const auto& domains = lexicon.domains();
  auto fail = [&](const std::string& what) { throw ArgumentError("profile '" + p.bot_id + "': " + what); };
  if (p.bot_id.empty()) throw ArgumentError("profile without bot_id");
  if (!(p.incoherence_prob >= 0.0 && p.incoherence_prob <= 1.0)) fail("incoherence_prob outside [0, 1]");
  if (!(p.depth_persistence >= 0.0 && p.depth_persistence < 1.0)) fail("depth_persistence outside [0, 1)");
  if (!(p.turn_count.median >= 1.0) || !(p.turn_count.dispersion >= 0.0)) fail("invalid turn count model");
  if (!(p.rated_fraction >= 0.0 && p.rated_fraction <= 1.0)) fail("rated_fraction outside [0, 1]");
  if (!(p.evaluator_fraction >= 0.0 && p.evaluator_fraction <= 1.0)) fail("evaluator_fraction outside [0, 1]");
  if (!(p.rating_model.noise_sd >= 0.0)) fail("negative rating noise");
  if (!(p.keywords_per_bot_turn >= 0.0)) fail("negative keywords_per_bot_turn");
  if (!(p.response_time_s >= 0.0) || !(p.user_gap_s >= 0.0)) fail("negative response time");

  ResolvedProfile r;
  r.jump.assign(domains.size(), 0.0);
  std::size_t support = 0;
  for (const auto& [name, w] : p.domain_distribution) {
    const auto d = domains.find(name);
    if (!d) fail("unknown domain '" + name + "'");
    if (!(w >= 0.0) || !std::isfinite(w)) fail("negative domain weight");
    r.jump[*d] = w;
    support += w > 0.0;
  }
  if (support < 2) fail("domain_distribution needs at least 2 domains with positive weight");
  const double total = std::accumulate(r.jump.begin(), r.jump.end(), 0.0);
  for (auto& w : r.jump) w /= total;
  r.stationary.resize(domains.size());
  double z = 0.0;
  for (std::size_t d = 0; d < domains.size(); ++d) z += r.stationary[d] = r.jump[d] * (1.0 - r.jump[d]);
  for (auto& s : r.stationary) s /= z;

  r.pools.resize(domains.size());
  for (std::size_t d = 0; d < domains.size(); ++d) {
    if (r.jump[d] <= 0.0) continue;
    if (auto it = p.keyword_pool.find(domains.name(d)); it != p.keyword_pool.end()) {
      r.pools[d] = it->second;
    } else {
      r.pools[d].assign(lexicon.keywords(d).begin(), lexicon.keywords(d).end());
    }
    if (r.pools[d].empty()) fail("empty keyword pool for domain '" + domains.name(d) + "'");
  }
  r.offsets.assign(domains.size(), 0.0);
  for (const auto& [name, off] : p.rating_model.domain_offsets) {
    const auto d = domains.find(name);
    if (!d) fail("unknown domain '" + name + "' in domain_offsets");
    r.offsets[*d] = off;
  }
  return r;
}

// E[rho^T] for T = max(2, round(median + dispersion * Z)).
inline double expected_power_of_turns(double rho, const TurnCountModel& tc) {
  if (tc.dispersion == 0.0) return std::pow(rho, std::max(2.0, std::round(tc.median)));
  const double hi = tc.median + 12.0 * tc.dispersion + 2.0;
  double e = std::pow(rho, 2.0) * normal_cdf((2.5 - tc.median) / tc.dispersion);
  for (double k = 3.0; k <= hi; k += 1.0) {
    const double pk = normal_cdf((k + 0.5 - tc.median) / tc.dispersion) - normal_cdf((k - 0.5 - tc.median) / tc.dispersion);
    e += pk * std::pow(rho, k);
  }
  return e;
}

inline std::size_t draw_turn_count(Rng& rng, const TurnCountModel& tc) {
  const double t = std::round(tc.median + tc.dispersion * standard_normal(rng));
  return static_cast<std::size_t>(std::max(2.0, t));
}

inline const std::vector<std::string>& user_fillers() {
  static const std::vector<std::string> f = {"tell me about", "what do you think about", "i really like",
                                             "do you know about", "let us talk about", "how about"};
  return f;
}
inline const std::vector<std::string>& bot_fillers() {
  static const std::vector<std::string> f = {"i think", "yes i love", "oh well", "did you know", "i like"};
  return f;
}
inline constexpr const char* kIncoherentFiller = "sorry what was that";

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[uniform_index(rng, v.size())];
}

}  // namespace detail

/// Closed-form planted metrics for a profile.
inline PlantedBot expected_metrics(const BotQualityProfile& p,
                                   const topics::TopicLexicon& lexicon = topics::default_lexicon()) {
  const auto r = detail::resolve(p, lexicon);
  PlantedBot out;
  out.bot_id = p.bot_id;
  out.true_rer = p.incoherence_prob;
  out.true_entropy_bits = stats::shannon_entropy(r.stationary);
  const double rho = p.depth_persistence;
  out.expected_depth = 1.0 / (1.0 - rho);
  out.expected_depth_finite = (1.0 - detail::expected_power_of_turns(rho, p.turn_count)) / (1.0 - rho);
  double offset = 0.0;
  for (std::size_t d = 0; d < r.stationary.size(); ++d) offset += r.stationary[d] * r.offsets[d];
  const auto& m = p.rating_model;
  out.expected_rating = std::clamp(m.intercept + m.w_incoherence * p.incoherence_prob +
                                       m.w_depth * out.expected_depth_finite +
                                       m.w_breadth * out.true_entropy_bits + offset,
                                   1.0, 5.0);
  for (std::size_t d = 0; d < r.stationary.size(); ++d) {
    if (r.stationary[d] > 0.0) out.stationary[lexicon.domains().name(d)] = r.stationary[d];
  }
  return out;
}

/// Generate `conversations_per_bot` conversations for each profile.
/// Each bot draws from its own stream seeded by (seed, bot index).
inline GeneratedCorpus generate_corpus(std::span<const BotQualityProfile> profiles, std::size_t conversations_per_bot,
                                       std::uint64_t seed,
                                       const topics::TopicLexicon& lexicon = topics::default_lexicon()) {
  if (profiles.empty()) throw ArgumentError("no profiles");
  if (conversations_per_bot == 0) throw ArgumentError("conversations_per_bot must be at least 1");
  std::set<std::string> ids;
  for (const auto& p : profiles) {
    if (!ids.insert(p.bot_id).second) throw ArgumentError("duplicate bot_id '" + p.bot_id + "'");
  }
  GeneratedCorpus out;
  std::vector<Conversation> conversations;
  const std::int64_t epoch_ms = 1'500'000'000'000;

  for (std::size_t b = 0; b < profiles.size(); ++b) {
    const auto& p = profiles[b];
    const auto r = detail::resolve(p, lexicon);
    out.truth.bots.push_back(expected_metrics(p, lexicon));
    const double planted_entropy = out.truth.bots.back().true_entropy_bits;
    Rng rng(derive_seed(seed, {b}));
    const std::size_t user_pool = p.user_pool > 0 ? p.user_pool : std::max<std::size_t>(1, conversations_per_bot / 2);

    for (std::size_t n = 0; n < conversations_per_bot; ++n) {
      Conversation c;
      c.conversation_id = p.bot_id + "-" + std::to_string(n);
      c.bot_id = p.bot_id;
      c.user_id = "user" + std::to_string(uniform_index(rng, user_pool));
      const std::size_t turns = detail::draw_turn_count(rng, p.turn_count);
      PlantedConversation planted;

      std::int64_t ts = epoch_ms + static_cast<std::int64_t>(n) * 3'600'000 +
                        static_cast<std::int64_t>(b) * 1'000;
      topics::DomainIndex domain = sample_weighted(rng, r.stationary);
      std::string last_user_keyword;
      std::size_t bot_turns = 0, incoherent_turns = 0;
      for (std::size_t t = 0; t < turns; ++t) {
        const bool user_turn = t % 2 == 0;
        bool same_as_previous = false;
        if (t > 0) {
          if (bernoulli(rng, p.depth_persistence)) {
            same_as_previous = true;
          } else {
            std::vector<double> w(r.jump);
            w[domain] = 0.0;
            domain = sample_weighted(rng, w);
          }
        }
        const auto& pool = r.pools[domain];
        std::string text;
        bool incoherent = false;
        if (user_turn) {
          last_user_keyword = detail::pick(rng, pool);
          text = detail::pick(rng, detail::user_fillers()) + " " + last_user_keyword;
          if (t > 0) ts += std::llround(1000.0 * p.user_gap_s * (0.5 + uniform01(rng)));
        } else {
          ++bot_turns;
          incoherent = bernoulli(rng, p.incoherence_prob);
          if (incoherent) {
            ++incoherent_turns;
            text = std::string(detail::kIncoherentFiller) + " " + detail::pick(rng, pool);
          } else {
            text = detail::pick(rng, detail::bot_fillers());
            if (same_as_previous) text += " " + last_user_keyword;
            const double extra = p.keywords_per_bot_turn;
            auto count = static_cast<std::size_t>(std::floor(extra));
            if (bernoulli(rng, extra - std::floor(extra))) ++count;
            if (count == 0 && !same_as_previous) count = 1;
            for (std::size_t k = 0; k < count; ++k) text += " " + detail::pick(rng, pool);
          }
          const double latency_ms = 1000.0 * p.response_time_s * (0.5 + uniform01(rng));
          ts += static_cast<std::int64_t>(std::llround(latency_ms));
          out.annotations.push_back(
              {c.conversation_id, t, incoherent ? CoherenceLabel::incoherent : CoherenceLabel::coherent});
        }
        c.turns.push_back({user_turn ? Speaker::user : Speaker::bot, std::move(text), ts});
        planted.domains.push_back(domain);
        planted.incoherent.push_back(incoherent);
      }

      if (bernoulli(rng, p.rated_fraction)) {
        const auto runs = topics::maximal_runs(planted.domains);
        const double depth = static_cast<double>(turns) / static_cast<double>(runs.size());
        const double inc_frac =
            bot_turns == 0 ? 0.0 : static_cast<double>(incoherent_turns) / static_cast<double>(bot_turns);
        const auto conv_domain = topics::conversation_domain(planted.domains);
        const auto& m = p.rating_model;
        double mu = m.intercept + m.w_incoherence * inc_frac + m.w_depth * depth + m.w_breadth * planted_entropy +
                    r.offsets[conv_domain];
        const bool evaluator = bernoulli(rng, p.evaluator_fraction);
        if (evaluator) mu += p.evaluator_offset;
        const double noisy = mu + m.noise_sd * standard_normal(rng);
        const int score = static_cast<int>(std::clamp(std::round(noisy), 1.0, 5.0));
        c.rating = RatingRecord{score, evaluator ? RatingSource::engagement_evaluator : RatingSource::user,
                                std::nullopt};
      }
      conversations.push_back(std::move(c));
      out.truth.conversations.push_back(std::move(planted));
    }
  }
  out.corpus = Corpus(std::move(conversations));
  return out;
}

/// `n` profiles of strictly decreasing quality named bot1..botN (bot1 best).
///
/// Quality q runs from 1 (bot1) to 0 (botN). Each dimension reaches its best
/// value at its own quality cutoff and degrades linearly below it, so bots
/// differ in which dimensions they excel at: coherence saturates from
/// q >= 0.5, depth from 0.66, breadth from 0.5, vocabulary from 0.66,
/// conversation length from 0.15, user engagement time from 0.3 and rating
/// consistency across domains from 0.8. Intercepts are solved so planted
/// expected ratings step down by 3.0 / (n - 1) from 4.5.
inline std::vector<BotQualityProfile> default_profiles(std::size_t n,
                                                       const topics::TopicLexicon& lexicon = topics::default_lexicon()) {
  if (n == 0) throw ArgumentError("need at least one profile");
  const auto& domains = lexicon.domains();
  std::vector<std::string> order;
  for (const auto& name : domains.names()) {
    if (!domains.fallback() || name != domains.name(*domains.fallback())) order.push_back(name);
  }
  const auto spread = topics::default_spread_domains();
  auto saturate = [](double q, double cutoff) { return std::min(1.0, q / cutoff); };
  std::vector<BotQualityProfile> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = n == 1 ? 1.0 : 1.0 - static_cast<double>(i) / static_cast<double>(n - 1);
    BotQualityProfile p;
    p.bot_id = "bot" + std::to_string(i + 1);
    p.incoherence_prob = 0.05 + 0.30 * (1.0 - saturate(q, 0.5));
    p.depth_persistence = 0.40 + 0.30 * saturate(q, 0.66);
    const double breadth = saturate(q, 0.5);
    const double vocabulary = saturate(q, 0.66);
    const auto k = std::min(order.size(), static_cast<std::size_t>(std::lround(6.0 + 14.0 * breadth)));
    const double decay = 0.70 + 0.30 * breadth;
    const auto pool_size = static_cast<std::size_t>(std::lround(5.0 + 11.0 * vocabulary));
    for (std::size_t j = 0; j < k; ++j) {
      p.domain_distribution[order[j]] = std::pow(decay, static_cast<double>(j));
      const auto& kws = lexicon.keywords(domains.index(order[j]));
      std::vector<std::string> pool(kws.begin(), kws.end());
      pool.resize(std::min(pool.size(), pool_size));
      p.keyword_pool[order[j]] = std::move(pool);
    }
    p.keywords_per_bot_turn = 1.0 + 1.5 * vocabulary;
    p.turn_count = {10.0 + 6.0 * saturate(q, 0.15), 3.0};
    p.response_time_s = 1.5;
    p.user_gap_s = 4.0 + 3.0 * saturate(q, 0.3);
    p.rating_model.w_incoherence = -3.0;
    p.rating_model.w_depth = 0.3;
    p.rating_model.w_breadth = 0.2;
    p.rating_model.noise_sd = 0.7;
    const double spread_amp = 0.8 * (1.0 - saturate(q, 0.8));
    const double pattern[] = {1.0, -1.0, 0.5, -0.5, 0.0};
    for (std::size_t s = 0; s < spread.size(); ++s) p.rating_model.domain_offsets[spread[s]] = spread_amp * pattern[s];
    p.rating_model.intercept = 0.0;
    const double target = n == 1 ? 3.0 : 4.5 - 3.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    // expected_metrics clamps, so evaluate the unclamped linear part directly.
    const auto base = expected_metrics(p, lexicon);
    const double linear_part = p.rating_model.w_incoherence * p.incoherence_prob +
                               p.rating_model.w_depth * base.expected_depth_finite +
                               p.rating_model.w_breadth * base.true_entropy_bits;
    double offset = 0.0;
    for (const auto& [name, prob] : base.stationary) {
      if (auto it = p.rating_model.domain_offsets.find(name); it != p.rating_model.domain_offsets.end())
        offset += prob * it->second;
    }
    p.rating_model.intercept = target - linear_part - offset;
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const BotQualityProfile& p) {
  nlohmann::ordered_json dist = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.domain_distribution) dist[k] = v;
  nlohmann::ordered_json pool = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.keyword_pool) pool[k] = v;
  nlohmann::ordered_json offsets = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.rating_model.domain_offsets) offsets[k] = v;
  return {{"bot_id", p.bot_id},
          {"incoherence_prob", p.incoherence_prob},
          {"domain_distribution", dist},
          {"depth_persistence", p.depth_persistence},
          {"keyword_pool", pool},
          {"turn_count", {{"median", p.turn_count.median}, {"dispersion", p.turn_count.dispersion}}},
          {"rating_model",
           {{"intercept", p.rating_model.intercept},
            {"w_incoherence", p.rating_model.w_incoherence},
            {"w_depth", p.rating_model.w_depth},
            {"w_breadth", p.rating_model.w_breadth},
            {"noise_sd", p.rating_model.noise_sd},
            {"domain_offsets", offsets}}},
          {"keywords_per_bot_turn", p.keywords_per_bot_turn},
          {"rated_fraction", p.rated_fraction},
          {"evaluator_fraction", p.evaluator_fraction},
          {"evaluator_offset", p.evaluator_offset},
          {"response_time_s", p.response_time_s},
          {"user_gap_s", p.user_gap_s},
          {"user_pool", p.user_pool}};
}

inline BotQualityProfile profile_from_json(const nlohmann::json& j) {
  try {
    BotQualityProfile p;
    p.bot_id = j.at("bot_id").get<std::string>();
    p.incoherence_prob = j.value("incoherence_prob", p.incoherence_prob);
    p.domain_distribution = j.at("domain_distribution").get<std::map<std::string, double>>();
    p.depth_persistence = j.value("depth_persistence", p.depth_persistence);
    if (j.contains("keyword_pool")) p.keyword_pool = j["keyword_pool"].get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("turn_count")) {
      p.turn_count.median = j["turn_count"].value("median", p.turn_count.median);
      p.turn_count.dispersion = j["turn_count"].value("dispersion", p.turn_count.dispersion);
    }
    if (j.contains("rating_model")) {
      const auto& m = j["rating_model"];
      p.rating_model.intercept = m.value("intercept", p.rating_model.intercept);
      p.rating_model.w_incoherence = m.value("w_incoherence", p.rating_model.w_incoherence);
      p.rating_model.w_depth = m.value("w_depth", p.rating_model.w_depth);
      p.rating_model.w_breadth = m.value("w_breadth", p.rating_model.w_breadth);
      p.rating_model.noise_sd = m.value("noise_sd", p.rating_model.noise_sd);
      if (m.contains("domain_offsets")) p.rating_model.domain_offsets = m["domain_offsets"].get<std::map<std::string, double>>();
    }
    p.keywords_per_bot_turn = j.value("keywords_per_bot_turn", p.keywords_per_bot_turn);
    p.rated_fraction = j.value("rated_fraction", p.rated_fraction);
    p.evaluator_fraction = j.value("evaluator_fraction", p.evaluator_fraction);
    p.evaluator_offset = j.value("evaluator_offset", p.evaluator_offset);
    p.response_time_s = j.value("response_time_s", p.response_time_s);
    p.user_gap_s = j.value("user_gap_s", p.user_gap_s);
    p.user_pool = j.value("user_pool", p.user_pool);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed profile: ") + e.what());
  }
}

inline std::vector<BotQualityProfile> profiles_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SchemaError("profiles file must hold a JSON array");
  std::vector<BotQualityProfile> out;
  for (const auto& p : j) out.push_back(profile_from_json(p));
  return out;
}

inline nlohmann::ordered_json to_json(const GroundTruth& truth, const Corpus& corpus, const topics::DomainSet& domains) {
  nlohmann::ordered_json bots = nlohmann::ordered_json::array();
  for (const auto& b : truth.bots) {
    nlohmann::ordered_json stationary = nlohmann::ordered_json::object();
    for (const auto& [k, v] : b.stationary) stationary[k] = v;
    bots.push_back({{"bot_id", b.bot_id},
                    {"true_rer", b.true_rer},
                    {"true_entropy_bits", b.true_entropy_bits},
                    {"expected_depth", b.expected_depth},
                    {"expected_depth_finite", b.expected_depth_finite},
                    {"expected_rating", b.expected_rating},
                    {"stationary_domains", stationary}});
  }
  nlohmann::ordered_json convs = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < truth.conversations.size(); ++i) {
    std::vector<std::string> names;
    for (auto d : truth.conversations[i].domains) names.push_back(domains.name(d));
    std::vector<std::size_t> incoherent;
    for (std::size_t t = 0; t < truth.conversations[i].incoherent.size(); ++t) {
      if (truth.conversations[i].incoherent[t]) incoherent.push_back(t);
    }
    convs.push_back({{"conversation_id", corpus[i].conversation_id},
                     {"turn_domains", names},
                     {"incoherent_turns", incoherent}});
  }
  return {{"bots", bots}, {"conversations", convs}};
}

}  // namespace convoeval::synth
