// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Topical domain classification of utterances.
//
// Two classifiers share one interface: a deterministic keyword lexicon and a
// trainable deep averaging network (token embeddings averaged, then a tanh MLP
// and softmax). Both produce a DomainPrediction over a configured closed
// domain set.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "convoeval/corpus.hpp"
#include "convoeval/error.hpp"
#include "convoeval/random.hpp"
#include "convoeval/text.hpp"

namespace convoeval::topics {

using DomainIndex = std::size_t;

/// Ordered closed set of domain names. Order fixes argmax tie-breaking.
class DomainSet {
 public:
  DomainSet() = default;
  explicit DomainSet(std::vector<std::string> names, std::optional<std::string> fallback = std::nullopt)
      : names_(std::move(names)) {
    if (names_.size() < 2) throw ArgumentError("a domain set needs at least 2 domains");
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) throw ArgumentError("empty domain name");
      if (!index_.emplace(names_[i], i).second) throw ArgumentError("duplicate domain '" + names_[i] + "'");
    }
    if (fallback) {
      auto it = index_.find(*fallback);
      if (it == index_.end()) throw ArgumentError("fallback domain '" + *fallback + "' is not in the domain set");
      fallback_ = it->second;
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(DomainIndex i) const { return names_.at(i); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::optional<DomainIndex> fallback() const noexcept { return fallback_; }

  std::optional<DomainIndex> find(std::string_view name) const {
    if (auto it = index_.find(std::string(name)); it != index_.end()) return it->second;
    return std::nullopt;
  }
  DomainIndex index(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw ArgumentError("unknown domain '" + std::string(name) + "'");
  }

  friend bool operator==(const DomainSet& a, const DomainSet& b) {
    return a.names_ == b.names_ && a.fallback_ == b.fallback_;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, DomainIndex> index_;
  std::optional<DomainIndex> fallback_;
};

struct DomainPrediction {
  DomainIndex label = 0;
  std::vector<double> scores;
  friend bool operator==(const DomainPrediction&, const DomainPrediction&) = default;
};

/// Index of the largest score; ties go to the earliest domain.
inline DomainIndex argmax(std::span<const double> scores) {
  DomainIndex best = 0;
  for (DomainIndex i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Lexicon

/// Keyword lists per domain plus stopwords.
class TopicLexicon {
 public:
  TopicLexicon() = default;

  /// Keywords are lowercased; each must tokenize to exactly one token and no
  /// domain's keyword set may be empty or overlap the stopwords.
  TopicLexicon(DomainSet domains, const std::vector<std::vector<std::string>>& keywords_by_domain,
               std::set<std::string> stopwords)
      : domains_(std::move(domains)), stopwords_(std::move(stopwords)) {
    if (keywords_by_domain.size() != domains_.size()) throw ArgumentError("keyword lists must match the domain set");
    keywords_.resize(domains_.size());
    for (DomainIndex d = 0; d < domains_.size(); ++d) {
      for (const auto& raw : keywords_by_domain[d]) {
        const auto toks = text::tokenize(raw);
        if (toks.size() != 1 || toks.front().size() != raw.size()) {
          throw ArgumentError("keyword '" + raw + "' must be a single lowercase alphanumeric token");
        }
        const auto& kw = toks.front();
        if (stopwords_.contains(kw)) throw ArgumentError("keyword '" + kw + "' is also a stopword");
        keywords_[d].insert(kw);
        auto& owners = owners_[kw];
        if (std::find(owners.begin(), owners.end(), d) == owners.end()) owners.push_back(d);
      }
      if (keywords_[d].empty()) throw ArgumentError("domain '" + domains_.name(d) + "' has no keywords");
    }
  }

  const DomainSet& domains() const noexcept { return domains_; }
  const std::set<std::string>& keywords(DomainIndex d) const { return keywords_.at(d); }
  const std::set<std::string>& stopwords() const noexcept { return stopwords_; }
  bool is_stopword(const std::string& token) const { return stopwords_.contains(token); }

  /// Domains that list the keyword; empty for non-keywords.
  std::span<const DomainIndex> owners(const std::string& token) const {
    if (auto it = owners_.find(token); it != owners_.end()) return it->second;
    return {};
  }

  /// All keywords across domains, sorted.
  std::vector<std::string> all_keywords() const {
    std::vector<std::string> out;
    out.reserve(owners_.size());
    for (const auto& [kw, _] : owners_) out.push_back(kw);
    return out;
  }

 private:
  DomainSet domains_;
  std::vector<std::set<std::string>> keywords_;
  std::map<std::string, std::vector<DomainIndex>> owners_;
  std::set<std::string> stopwords_;
};

/// Lexicon file: {"domains": {"Sports": [...], ...}, "stopwords": [...], "fallback": "Other"?}.
/// Domain order follows the file.
inline TopicLexicon lexicon_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object() || !j.contains("domains") || !j["domains"].is_object()) {
    throw SchemaError("lexicon must have a \"domains\" object");
  }
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> keywords;
  for (const auto& [name, list] : j["domains"].items()) {
    if (!list.is_array()) throw SchemaError("keywords of domain '" + name + "' must be an array");
    names.push_back(name);
    keywords.emplace_back();
    for (const auto& kw : list) {
      if (!kw.is_string()) throw SchemaError("keywords must be strings");
      keywords.back().push_back(kw.get<std::string>());
    }
  }
  std::set<std::string> stop;
  if (auto it = j.find("stopwords"); it != j.end()) {
    if (!it->is_array()) throw SchemaError("stopwords must be an array");
    for (const auto& s : *it) {
      if (!s.is_string()) throw SchemaError("stopwords must be strings");
      stop.insert(s.get<std::string>());
    }
  }
  std::optional<std::string> fallback;
  if (auto it = j.find("fallback"); it != j.end() && !it->is_null()) fallback = it->get<std::string>();
  return TopicLexicon(DomainSet(std::move(names), std::move(fallback)), keywords, std::move(stop));
}

inline nlohmann::ordered_json to_json(const TopicLexicon& lex) {
  nlohmann::ordered_json domains = nlohmann::ordered_json::object();
  for (DomainIndex d = 0; d < lex.domains().size(); ++d) {
    domains[lex.domains().name(d)] = std::vector<std::string>(lex.keywords(d).begin(), lex.keywords(d).end());
  }
  nlohmann::ordered_json j = {{"domains", domains},
                              {"stopwords", std::vector<std::string>(lex.stopwords().begin(), lex.stopwords().end())}};
  if (auto fb = lex.domains().fallback()) j["fallback"] = lex.domains().name(*fb);
  return j;
}

/// Built-in 26-domain lexicon. The last domain, "Other", is the fallback.
inline const TopicLexicon& default_lexicon() {
  static const TopicLexicon lexicon = [] {
    const auto j = nlohmann::ordered_json::parse(R"({
  "domains": {
    "Sports": ["nba", "nfl", "football", "soccer", "basketball", "baseball", "tennis", "federer", "golf", "hockey", "olympics", "lebron", "playoffs", "quarterback", "stadium", "athlete"],
    "Politics": ["obama", "trump", "election", "senate", "congress", "president", "democrat", "republican", "vote", "policy", "government", "parliament", "campaign", "senator", "governor", "politics"],
    "Entertainment": ["tv", "netflix", "comedy", "episode", "series", "sitcom", "hbo", "broadway", "theater", "podcast", "standup", "comedian", "drama", "entertainment", "showtime", "streaming"],
    "Technology": ["computer", "smartphone", "iphone", "software", "internet", "robot", "ai", "gadget", "laptop", "google", "technology", "programming", "app", "silicon", "startup", "android"],
    "Fashion": ["clothes", "dress", "shoes", "fashion", "designer", "outfit", "style", "jeans", "runway", "gucci", "jacket", "makeup", "wardrobe", "sneakers", "boutique", "vogue"],
    "Music": ["music", "musician", "song", "singer", "band", "album", "guitar", "concert", "beatles", "lennon", "piano", "rapper", "lyrics", "spotify", "jazz", "drummer"],
    "Movies": ["movie", "film", "actor", "actress", "cinema", "hollywood", "director", "oscar", "starwars", "marvel", "blockbuster", "sequel", "pixar", "trailer", "screenplay", "movies"],
    "Books": ["book", "novel", "author", "reading", "library", "poetry", "poem", "fiction", "chapter", "bestseller", "tolkien", "shakespeare", "literature", "paperback", "kindle", "books"],
    "Science": ["science", "physics", "chemistry", "biology", "experiment", "scientist", "atom", "evolution", "einstein", "laboratory", "molecule", "research", "theory", "quantum", "genetics", "neuroscience"],
    "Travel": ["travel", "vacation", "flight", "airport", "hotel", "beach", "tourist", "passport", "paris", "cruise", "trip", "destination", "backpacking", "luggage", "resort", "sightseeing"],
    "Food": ["food", "pizza", "cooking", "recipe", "restaurant", "chef", "pasta", "burger", "sushi", "dessert", "chocolate", "baking", "vegetarian", "breakfast", "cuisine", "tacos"],
    "Health": ["health", "doctor", "exercise", "fitness", "diet", "hospital", "medicine", "yoga", "workout", "nutrition", "vitamin", "sleep", "wellness", "therapy", "gym", "meditation"],
    "Finance": ["money", "stock", "bitcoin", "bank", "investment", "economy", "finance", "salary", "budget", "crypto", "mortgage", "savings", "inflation", "wallstreet", "tax", "dividend"],
    "Education": ["school", "college", "university", "teacher", "student", "homework", "exam", "education", "classroom", "professor", "degree", "math", "graduation", "tuition", "lecture", "semester"],
    "Gaming": ["videogame", "gaming", "xbox", "playstation", "nintendo", "minecraft", "fortnite", "console", "gamer", "zelda", "mario", "esports", "pokemon", "controller", "multiplayer", "steam"],
    "Weather": ["weather", "rain", "snow", "sunny", "forecast", "temperature", "storm", "hurricane", "cloudy", "thunder", "humidity", "tornado", "winter", "summer", "climate", "drizzle"],
    "News": ["news", "headline", "journalist", "newspaper", "reporter", "breaking", "article", "media", "cnn", "coverage", "press", "editorial", "anchor", "broadcast", "scandal", "headlines"],
    "Art": ["art", "painting", "artist", "museum", "sculpture", "gallery", "picasso", "drawing", "canvas", "vangogh", "portrait", "sketch", "exhibition", "mural", "watercolor", "artwork"],
    "History": ["history", "war", "ancient", "empire", "historian", "medieval", "revolution", "pharaoh", "lincoln", "napoleon", "dynasty", "civilization", "archaeology", "castle", "colonial", "vikings"],
    "Animals": ["dog", "cat", "animal", "pet", "puppy", "kitten", "horse", "zoo", "elephant", "lion", "tiger", "wildlife", "bird", "dolphin", "penguin", "animals"],
    "Space": ["space", "mars", "nasa", "planet", "astronaut", "rocket", "galaxy", "moon", "telescope", "spacex", "orbit", "asteroid", "universe", "satellite", "cosmos", "comet"],
    "Cars": ["car", "tesla", "engine", "truck", "driving", "vehicle", "motorcycle", "ferrari", "toyota", "highway", "sedan", "horsepower", "garage", "mechanic", "cars", "convertible"],
    "Celebrities": ["kardashian", "beyonce", "celebrity", "famous", "paparazzi", "swift", "gossip", "influencer", "instagram", "rihanna", "oprah", "redcarpet", "superstar", "fame", "tabloid", "celebrities"],
    "Family": ["family", "mom", "dad", "kids", "children", "parents", "brother", "sister", "wedding", "baby", "grandma", "grandpa", "husband", "wife", "cousin", "daughter"],
    "Shopping": ["shopping", "amazon", "store", "mall", "discount", "sale", "buy", "coupon", "checkout", "retail", "purchase", "bargain", "cart", "ecommerce", "deal", "groceries"],
    "Other": ["misc", "miscellaneous", "random", "whatever", "stuff", "trivia"]
  },
  "stopwords": ["a", "about", "actually", "all", "am", "an", "and", "any", "are", "as", "at", "be", "because", "been", "but", "by",
                "can", "could", "d", "did", "do", "does", "doing", "favorite", "for", "from", "get", "go", "good", "great", "had", "has",
                "have", "he", "hello", "her", "hey", "hi", "him", "his", "hmm", "how", "i", "if", "in", "interesting", "is", "it", "its",
                "just", "know", "let", "like", "ll", "love", "m", "me", "more", "my", "no", "not", "of", "oh", "ok", "okay", "on", "or",
                "our", "re", "really", "s", "say", "she", "so", "some", "sorry", "sure", "t", "talk", "tell", "that", "the", "their",
                "them", "then", "there", "they", "think", "this", "to", "too", "um", "uh", "up", "us", "ve", "very", "want", "was", "we",
                "well", "were", "what", "when", "where", "which", "who", "why", "will", "with", "would", "yeah", "yes", "you", "your"],
  "fallback": "Other"
})");
    return lexicon_from_json(j);
  }();
  return lexicon;
}

/// The rating-spread domains used by domain coverage by default.
inline std::vector<std::string> default_spread_domains() {
  return {"Sports", "Politics", "Entertainment", "Technology", "Fashion"};
}

/// Keywords found in the utterance with their owning domains; stopwords are
/// dropped and each (keyword, domain) pair appears once.
inline std::set<std::pair<std::string, std::string>> extract_keywords(std::string_view utterance,
                                                                      const TopicLexicon& lexicon) {
  std::set<std::pair<std::string, std::string>> out;
  for (auto& tok : text::tokenize(utterance)) {
    if (lexicon.is_stopword(tok)) continue;
    for (auto d : lexicon.owners(tok)) out.emplace(tok, lexicon.domains().name(d));
  }
  return out;
}

/// Keyword occurrence counts in the utterance (multiset view of extract_keywords).
inline std::map<std::string, std::size_t> keyword_occurrences(std::string_view utterance, const TopicLexicon& lexicon) {
  std::map<std::string, std::size_t> out;
  for (auto& tok : text::tokenize(utterance)) {
    if (lexicon.is_stopword(tok) || lexicon.owners(tok).empty()) continue;
    ++out[tok];
  }
  return out;
}

/// Scores proportional to keyword hits per domain; uniform with the fallback
/// label (or the first domain when none is configured) on zero hits.
class LexiconClassifier {
 public:
  explicit LexiconClassifier(TopicLexicon lexicon) : lexicon_(std::move(lexicon)) {}

  const DomainSet& domains() const noexcept { return lexicon_.domains(); }
  const TopicLexicon& lexicon() const noexcept { return lexicon_; }

  DomainPrediction classify(std::string_view utterance) const {
    if (!text::has_content(utterance)) throw ArgumentError("cannot classify an empty utterance");
    const std::size_t k = domains().size();
    std::vector<double> hits(k, 0.0);
    double total = 0.0;
    for (auto& tok : text::tokenize(utterance)) {
      if (lexicon_.is_stopword(tok)) continue;
      for (auto d : lexicon_.owners(tok)) {
        hits[d] += 1.0;
        total += 1.0;
      }
    }
    DomainPrediction p;
    if (total == 0.0) {
      p.scores.assign(k, 1.0 / static_cast<double>(k));
      p.label = domains().fallback().value_or(0);
      return p;
    }
    for (auto& h : hits) h /= total;
    p.scores = std::move(hits);
    p.label = argmax(p.scores);
    return p;
  }

 private:
  TopicLexicon lexicon_;
};

// ---------------------------------------------------------------------------
// Deep averaging network

struct DanConfig {
  std::size_t embedding_dim = 32;
  std::vector<std::size_t> hidden = {64};
  double word_dropout = 0.3;
  double learning_rate = 0.5;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
};

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct LabeledUtterance {
  std::string text;
  std::string label;
};

class DanClassifier;

namespace detail {

struct EncodedExample {
  std::vector<std::size_t> tokens;  // vocabulary ids (unknown tokens dropped)
  DomainIndex label = 0;
};

struct ForwardCache {
  std::vector<double> average;
  std::vector<std::vector<double>> activations;  // post-tanh output of each hidden layer
  std::vector<double> probabilities;
};

inline std::vector<double> softmax(std::vector<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : logits) v /= z;
  return logits;
}

}  // namespace detail

/// Deep averaging network: softmax(W_out tanh(... tanh(W_1 avg(E[tokens]) + b_1) ...) + b_out).
class DanClassifier {
 public:
  DanClassifier() = default;

  const DomainSet& domains() const noexcept { return domains_; }
  std::size_t embedding_dim() const noexcept { return dim_; }
  double word_dropout() const noexcept { return word_dropout_; }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }
  const std::vector<double>& embeddings() const noexcept { return embeddings_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  std::optional<std::size_t> token_id(const std::string& token) const {
    if (auto it = vocab_index_.find(token); it != vocab_index_.end()) return it->second;
    return std::nullopt;
  }

  std::vector<std::size_t> encode(std::string_view utterance) const {
    std::vector<std::size_t> ids;
    for (const auto& tok : text::tokenize(utterance)) {
      if (auto id = token_id(tok)) ids.push_back(*id);
    }
    return ids;
  }

  DomainPrediction classify(std::string_view utterance) const {
    if (!text::has_content(utterance)) throw ArgumentError("cannot classify an empty utterance");
    const auto cache = forward(encode(utterance));
    return {argmax(cache.probabilities), cache.probabilities};
  }

  /// All parameters in a fixed order: embeddings, then each layer's weights and bias.
  std::vector<double> flatten() const {
    std::vector<double> out(embeddings_);
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weights.begin(), l.weights.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
  }

  void unflatten(std::span<const double> params) {
    if (params.size() != parameter_count()) throw ArgumentError("parameter vector has the wrong size");
    auto it = params.begin();
    auto take = [&](std::vector<double>& dst) {
      std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
      it += static_cast<std::ptrdiff_t>(dst.size());
    };
    take(embeddings_);
    for (auto& l : layers_) {
      take(l.weights);
      take(l.bias);
    }
  }

  std::size_t parameter_count() const noexcept {
    std::size_t n = embeddings_.size();
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// Mean cross-entropy over the examples and its gradient (flatten() order).
  /// Token lists are used as given; no dropout is applied here.
  std::pair<double, std::vector<double>> loss_and_gradient(std::span<const detail::EncodedExample> batch) const {
    std::vector<double> grad(parameter_count(), 0.0);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    // Offsets of each layer's weights/bias in the flat vector.
    std::vector<std::size_t> w_off(layers_.size()), b_off(layers_.size());
    std::size_t off = embeddings_.size();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      w_off[l] = off;
      off += layers_[l].weights.size();
      b_off[l] = off;
      off += layers_[l].bias.size();
    }
    for (const auto& ex : batch) {
      const auto cache = forward(ex.tokens);
      loss -= std::log(std::max(cache.probabilities[ex.label], 1e-300)) * inv_n;
      // dL/dlogits = p - onehot
      std::vector<double> delta = cache.probabilities;
      delta[ex.label] -= 1.0;
      for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& layer = layers_[l];
        const std::vector<double>& input = l == 0 ? cache.average : cache.activations[l - 1];
        for (std::size_t o = 0; o < layer.outputs; ++o) {
          const double g = delta[o] * inv_n;
          grad[b_off[l] + o] += g;
          double* row = &grad[w_off[l] + o * layer.inputs];
          for (std::size_t i = 0; i < layer.inputs; ++i) row[i] += g * input[i];
        }
        std::vector<double> back(layer.inputs, 0.0);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
          const double* row = &layer.weights[o * layer.inputs];
          for (std::size_t i = 0; i < layer.inputs; ++i) back[i] += delta[o] * row[i];
        }
        if (l > 0) {
          const auto& act = cache.activations[l - 1];
          for (std::size_t i = 0; i < back.size(); ++i) back[i] *= 1.0 - act[i] * act[i];
        }
        delta = std::move(back);
      }
      if (!ex.tokens.empty()) {
        const double share = inv_n / static_cast<double>(ex.tokens.size());
        for (auto t : ex.tokens) {
          double* row = &grad[t * dim_];
          for (std::size_t k = 0; k < dim_; ++k) row[k] += share * delta[k];
        }
      }
    }
    return {loss, std::move(grad)};
  }

  detail::ForwardCache forward(std::span<const std::size_t> tokens) const {
    detail::ForwardCache cache;
    cache.average.assign(dim_, 0.0);
    for (auto t : tokens) {
      const double* row = &embeddings_[t * dim_];
      for (std::size_t k = 0; k < dim_; ++k) cache.average[k] += row[k];
    }
    if (!tokens.empty()) {
      for (auto& v : cache.average) v /= static_cast<double>(tokens.size());
    }
    const std::vector<double>* input = &cache.average;
    std::vector<double> logits;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      std::vector<double> out(layer.bias);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        const double* row = &layer.weights[o * layer.inputs];
        for (std::size_t i = 0; i < layer.inputs; ++i) out[o] += row[i] * (*input)[i];
      }
      if (l + 1 < layers_.size()) {
        for (auto& v : out) v = std::tanh(v);
        cache.activations.push_back(std::move(out));
        input = &cache.activations.back();
      } else {
        logits = std::move(out);
      }
    }
    cache.probabilities = detail::softmax(std::move(logits));
    return cache;
  }

  friend bool operator==(const DanClassifier& a, const DanClassifier& b) {
    return a.domains_ == b.domains_ && a.vocabulary_ == b.vocabulary_ && a.dim_ == b.dim_ &&
           a.word_dropout_ == b.word_dropout_ && a.embeddings_ == b.embeddings_ && a.layers_ == b.layers_;
  }

  /// Build an untrained network with Glorot-uniform layers and small uniform embeddings.
  static DanClassifier initialize(DomainSet domains, std::vector<std::string> vocabulary, const DanConfig& config,
                                  Rng& rng) {
    if (config.embedding_dim == 0) throw ArgumentError("embedding dimension must be positive");
    if (!(config.word_dropout >= 0.0 && config.word_dropout < 1.0)) throw ArgumentError("word dropout must lie in [0, 1)");
    DanClassifier m;
    m.domains_ = std::move(domains);
    m.vocabulary_ = std::move(vocabulary);
    m.reindex();
    m.dim_ = config.embedding_dim;
    m.word_dropout_ = config.word_dropout;
    m.embeddings_.resize(m.vocabulary_.size() * m.dim_);
    for (auto& v : m.embeddings_) v = uniform01(rng) - 0.5;
    std::size_t in = m.dim_;
    auto add_layer = [&](std::size_t out) {
      if (out == 0) throw ArgumentError("hidden layer size must be positive");
      DenseLayer l{in, out, std::vector<double>(in * out), std::vector<double>(out, 0.0)};
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      for (auto& w : l.weights) w = (2.0 * uniform01(rng) - 1.0) * limit;
      m.layers_.push_back(std::move(l));
      in = out;
    };
    for (auto h : config.hidden) add_layer(h);
    add_layer(m.domains_.size());
    return m;
  }

  static DanClassifier from_json(const nlohmann::json& j);

 private:
  void reindex() {
    vocab_index_.clear();
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) vocab_index_.emplace(vocabulary_[i], i);
  }

  DomainSet domains_;
  std::vector<std::string> vocabulary_;
  std::map<std::string, std::size_t> vocab_index_;
  std::size_t dim_ = 0;
  double word_dropout_ = 0.0;
  std::vector<double> embeddings_;  // |V| x dim, row-major
  std::vector<DenseLayer> layers_;  // hidden layers then the output layer
};

inline constexpr int kDanFormatVersion = 1;

inline nlohmann::ordered_json to_json(const DanClassifier& m) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : m.layers()) {
    layers.push_back({{"inputs", l.inputs}, {"outputs", l.outputs}, {"weights", l.weights}, {"bias", l.bias}});
  }
  nlohmann::ordered_json fallback;
  if (auto fb = m.domains().fallback()) fallback = m.domains().name(*fb);
  return {{"format", "convoeval-dan"},
          {"version", kDanFormatVersion},
          {"domains", m.domains().names()},
          {"fallback", fallback},
          {"embedding_dim", m.embedding_dim()},
          {"word_dropout", m.word_dropout()},
          {"vocabulary", m.vocabulary()},
          {"embeddings", m.embeddings()},
          {"layers", layers}};
}

inline DanClassifier DanClassifier::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "convoeval-dan") throw SchemaError("not a DAN model file");
    if (j.at("version").get<int>() != kDanFormatVersion) throw SchemaError("unsupported DAN model version");
    DanClassifier m;
    std::optional<std::string> fallback;
    if (!j.at("fallback").is_null()) fallback = j.at("fallback").get<std::string>();
    m.domains_ = DomainSet(j.at("domains").get<std::vector<std::string>>(), fallback);
    m.dim_ = j.at("embedding_dim").get<std::size_t>();
    m.word_dropout_ = j.at("word_dropout").get<double>();
    m.vocabulary_ = j.at("vocabulary").get<std::vector<std::string>>();
    m.reindex();
    m.embeddings_ = j.at("embeddings").get<std::vector<double>>();
    if (m.embeddings_.size() != m.vocabulary_.size() * m.dim_) throw SchemaError("embedding matrix has the wrong size");
    std::size_t in = m.dim_;
    for (const auto& lj : j.at("layers")) {
      DenseLayer l;
      l.inputs = lj.at("inputs").get<std::size_t>();
      l.outputs = lj.at("outputs").get<std::size_t>();
      l.weights = lj.at("weights").get<std::vector<double>>();
      l.bias = lj.at("bias").get<std::vector<double>>();
      if (l.inputs != in || l.weights.size() != l.inputs * l.outputs || l.bias.size() != l.outputs) {
        throw SchemaError("layer dimensions do not chain");
      }
      in = l.outputs;
      m.layers_.push_back(std::move(l));
    }
    if (m.layers_.empty() || in != m.domains_.size()) throw SchemaError("output layer does not match the domain set");
    for (double v : m.flatten()) {
      if (!std::isfinite(v)) throw SchemaError("non-finite parameter");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed DAN model: ") + e.what());
  } catch (const ArgumentError& e) {
    throw SchemaError(std::string("malformed DAN model: ") + e.what());
  }
}

struct DanTrainingResult {
  DanClassifier model;
  std::vector<double> loss_history;  // full-batch loss before each epoch's update
};

/// Full-batch gradient descent on mean cross-entropy. Word dropout removes each
/// token with probability p per epoch (keeping at least one token per example).
inline DanTrainingResult train_dan_with_history(std::span<const LabeledUtterance> labeled, const DomainSet& domains,
                                                const DanConfig& config) {
  if (labeled.empty()) throw TrainingError("no training examples");
  std::set<DomainIndex> labels;
  std::set<std::string> vocab_set;
  std::vector<std::vector<std::string>> tokenized;
  for (const auto& ex : labeled) {
    const auto d = domains.find(ex.label);
    if (!d) throw TrainingError("label '" + ex.label + "' is not in the domain set");
    labels.insert(*d);
    tokenized.push_back(text::tokenize(ex.text));
    vocab_set.insert(tokenized.back().begin(), tokenized.back().end());
  }
  if (labels.size() < 2) throw TrainingError("training data must contain at least 2 distinct labels");
  if (vocab_set.empty()) throw TrainingError("empty vocabulary after tokenization");

  Rng rng(config.seed);
  DanTrainingResult result{DanClassifier::initialize(domains, {vocab_set.begin(), vocab_set.end()}, config, rng), {}};
  auto& model = result.model;
  std::vector<detail::EncodedExample> encoded;
  encoded.reserve(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    detail::EncodedExample ex{{}, domains.index(labeled[i].label)};
    for (const auto& tok : tokenized[i]) ex.tokens.push_back(*model.token_id(tok));
    encoded.push_back(std::move(ex));
  }

  std::vector<detail::EncodedExample> dropped(encoded.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::span<const detail::EncodedExample> batch = encoded;
    if (config.word_dropout > 0.0) {
      for (std::size_t i = 0; i < encoded.size(); ++i) {
        dropped[i].label = encoded[i].label;
        dropped[i].tokens.clear();
        for (auto t : encoded[i].tokens) {
          if (!bernoulli(rng, config.word_dropout)) dropped[i].tokens.push_back(t);
        }
        if (dropped[i].tokens.empty() && !encoded[i].tokens.empty()) {
          dropped[i].tokens.push_back(encoded[i].tokens[uniform_index(rng, encoded[i].tokens.size())]);
        }
      }
      batch = dropped;
    }
    auto [loss, grad] = model.loss_and_gradient(batch);
    result.loss_history.push_back(loss);
    auto params = model.flatten();
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= config.learning_rate * grad[k];
    model.unflatten(params);
  }
  return result;
}

inline DanClassifier train_dan(std::span<const LabeledUtterance> labeled, const DomainSet& domains,
                               const DanConfig& config) {
  return train_dan_with_history(labeled, domains, config).model;
}

/// Encode examples with a trained model's vocabulary (for gradient checks and evaluation).
inline std::vector<detail::EncodedExample> encode_examples(const DanClassifier& model,
                                                           std::span<const LabeledUtterance> labeled) {
  std::vector<detail::EncodedExample> out;
  for (const auto& ex : labeled) out.push_back({model.encode(ex.text), model.domains().index(ex.label)});
  return out;
}

// ---------------------------------------------------------------------------
// Classifier interface

template <typename C>
concept TopicClassifier = requires(const C& c, std::string_view s) {
  { c.classify(s) } -> std::same_as<DomainPrediction>;
  { c.domains() } -> std::convertible_to<const DomainSet&>;
};

/// Either classifier behind one value type.
class Classifier {
 public:
  Classifier(LexiconClassifier c) : impl_(std::move(c)) {}  // NOLINT(google-explicit-constructor)
  Classifier(DanClassifier c) : impl_(std::move(c)) {}      // NOLINT(google-explicit-constructor)

  DomainPrediction classify(std::string_view s) const {
    return std::visit([&](const auto& c) { return c.classify(s); }, impl_);
  }
  const DomainSet& domains() const {
    return std::visit([](const auto& c) -> const DomainSet& { return c.domains(); }, impl_);
  }

 private:
  std::variant<LexiconClassifier, DanClassifier> impl_;
};

// ---------------------------------------------------------------------------
// Cross-validation

struct CrossValidationResult {
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracies;
  std::vector<std::size_t> fold_sizes;
};

/// Stratified k-fold assignment: examples grouped by label (sorted), shuffled
/// within a label, then dealt round-robin across folds with a shared cursor.
inline std::vector<std::size_t> stratified_folds(std::span<const LabeledUtterance> labeled, std::size_t k,
                                                 std::uint64_t seed) {
  if (k < 2) throw ArgumentError("cross-validation needs at least 2 folds");
  if (k > labeled.size()) throw ArgumentError("more folds than examples");
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labeled.size(); ++i) by_label[labeled[i].label].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> fold(labeled.size());
  std::size_t cursor = 0;
  for (auto& [_, members] : by_label) {
    shuffle(members, rng);
    for (auto i : members) fold[i] = cursor++ % k;
  }
  return fold;
}

/// k-fold cross-validated accuracy. `train` maps a training split to any
/// object with classify().
template <typename Trainer>
CrossValidationResult cross_validate(std::span<const LabeledUtterance> labeled, std::size_t k, std::uint64_t seed,
                                     Trainer&& train) {
  const auto fold = stratified_folds(labeled, k, seed);
  CrossValidationResult r;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<LabeledUtterance> train_set, test_set;
    for (std::size_t i = 0; i < labeled.size(); ++i) (fold[i] == f ? test_set : train_set).push_back(labeled[i]);
    const auto model = train(std::span<const LabeledUtterance>(train_set));
    std::size_t correct = 0;
    for (const auto& ex : test_set) {
      const auto p = model.classify(ex.text);
      if (model.domains().name(p.label) == ex.label) ++correct;
    }
    r.fold_sizes.push_back(test_set.size());
    r.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(test_set.size()));
  }
  double sum = 0.0;
  for (double a : r.fold_accuracies) sum += a;
  r.mean_accuracy = sum / static_cast<double>(k);
  return r;
}

inline CrossValidationResult cross_validate(std::span<const LabeledUtterance> labeled, std::size_t k,
                                            const DomainSet& domains, const DanConfig& config) {
  return cross_validate(labeled, k, config.seed,
                        [&](std::span<const LabeledUtterance> split) { return train_dan(split, domains, config); });
}

// ---------------------------------------------------------------------------
// Corpus annotation and run-based domain assignment

/// Which turns participate in a domain sequence.
enum class TurnSelection { both, user, bot };

struct DomainAnnotatedCorpus {
  DomainSet domains;
  std::vector<std::vector<DomainPrediction>> predictions;  // [conversation][turn], corpus order

  /// Labels of the selected turns of one conversation.
  std::vector<DomainIndex> sequence(const Corpus& corpus, std::size_t conversation,
                                    TurnSelection which = TurnSelection::both) const {
    std::vector<DomainIndex> seq;
    const auto& turns = corpus[conversation].turns;
    for (std::size_t t = 0; t < turns.size(); ++t) {
      if (which == TurnSelection::user && turns[t].speaker != Speaker::user) continue;
      if (which == TurnSelection::bot && turns[t].speaker != Speaker::bot) continue;
      seq.push_back(predictions[conversation][t].label);
    }
    return seq;
  }
};

/// Attach a prediction to every turn (user and bot) of every conversation.
template <TopicClassifier C>
DomainAnnotatedCorpus annotate_corpus(const Corpus& corpus, const C& classifier) {
  DomainAnnotatedCorpus out{classifier.domains(), {}};
  out.predictions.reserve(corpus.size());
  for (const auto& c : corpus.conversations()) {
    std::vector<DomainPrediction> per_turn;
    per_turn.reserve(c.turns.size());
    for (const auto& t : c.turns) per_turn.push_back(classifier.classify(t.text));
    out.predictions.push_back(std::move(per_turn));
  }
  return out;
}

/// Maximal runs of identical labels as (label, length) in order.
inline std::vector<std::pair<DomainIndex, std::size_t>> maximal_runs(std::span<const DomainIndex> sequence) {
  std::vector<std::pair<DomainIndex, std::size_t>> runs;
  for (auto d : sequence) {
    if (!runs.empty() && runs.back().first == d) {
      ++runs.back().second;
    } else {
      runs.emplace_back(d, 1);
    }
  }
  return runs;
}

/// Domain of the longest maximal run; ties go to the run that starts first.
inline DomainIndex conversation_domain(std::span<const DomainIndex> sequence) {
  if (sequence.empty()) throw ArgumentError("conversation_domain of an empty sequence");
  const auto runs = maximal_runs(sequence);
  auto best = runs.front();
  for (const auto& r : runs) {
    if (r.second > best.second) best = r;
  }
  return best.first;
}

}  // namespace convoeval::topics
