// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

// Conversation corpora: JSONL parsing and writing, invariant validation,
// rating subsets and summary statistics.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convoeval/error.hpp"
#include "convoeval/stats.hpp"
#include "convoeval/text.hpp"

namespace convoeval {

enum class Speaker { user, bot };
enum class RatingSource { user, engagement_evaluator };

inline const char* to_string(Speaker s) noexcept { return s == Speaker::user ? "user" : "bot"; }
inline const char* to_string(RatingSource s) noexcept {
  return s == RatingSource::user ? "user" : "engagement_evaluator";
}

inline std::optional<Speaker> parse_speaker(std::string_view s) noexcept {
  if (s == "user") return Speaker::user;
  if (s == "bot") return Speaker::bot;
  return std::nullopt;
}

inline std::optional<RatingSource> parse_rating_source(std::string_view s) noexcept {
  if (s == "user") return RatingSource::user;
  if (s == "engagement_evaluator") return RatingSource::engagement_evaluator;
  return std::nullopt;
}

struct Turn {
  Speaker speaker = Speaker::user;
  std::string text;
  std::int64_t timestamp_ms = 0;
  friend bool operator==(const Turn&, const Turn&) = default;
};

struct RatingRecord {
  int score = 0;
  RatingSource source = RatingSource::user;
  std::optional<std::string> feedback;
  friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

struct Conversation {
  std::string conversation_id;
  std::string bot_id;
  std::string user_id;
  std::vector<Turn> turns;
  std::optional<RatingRecord> rating;

  /// Last minus first turn timestamp, in seconds.
  double duration_s() const noexcept {
    if (turns.empty()) return 0.0;
    return static_cast<double>(turns.back().timestamp_ms - turns.front().timestamp_ms) / 1000.0;
  }
  friend bool operator==(const Conversation&, const Conversation&) = default;
};

/// Immutable collection of conversations indexed by bot and by user.
///
/// Bots are listed in lexicographic order. Constructing from conversations
/// with repeated ids throws ValidationError naming both positions.
class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<Conversation> conversations) : conversations_(std::move(conversations)) {
    for (std::size_t i = 0; i < conversations_.size(); ++i) {
      const auto& c = conversations_[i];
      if (auto [it, inserted] = by_id_.emplace(c.conversation_id, i); !inserted) {
        throw ValidationError("duplicate conversation_id '" + c.conversation_id + "' at records " +
                              std::to_string(it->second + 1) + " and " + std::to_string(i + 1));
      }
      by_bot_[c.bot_id].push_back(i);
      by_user_[c.user_id].push_back(i);
    }
    for (const auto& [bot, _] : by_bot_) bots_.push_back(bot);
  }

  std::span<const Conversation> conversations() const noexcept { return conversations_; }
  std::size_t size() const noexcept { return conversations_.size(); }
  bool empty() const noexcept { return conversations_.empty(); }
  const Conversation& operator[](std::size_t i) const { return conversations_[i]; }

  const std::vector<std::string>& bots() const noexcept { return bots_; }

  /// Positions of the bot's conversations, in corpus order.
  std::span<const std::size_t> conversations_of_bot(const std::string& bot_id) const {
    if (auto it = by_bot_.find(bot_id); it != by_bot_.end()) return it->second;
    return {};
  }
  std::span<const std::size_t> conversations_of_user(const std::string& user_id) const {
    if (auto it = by_user_.find(user_id); it != by_user_.end()) return it->second;
    return {};
  }

  std::optional<std::size_t> find(const std::string& conversation_id) const {
    if (auto it = by_id_.find(conversation_id); it != by_id_.end()) return it->second;
    return std::nullopt;
  }

  /// Copy without the listed conversation ids.
  Corpus without(const std::set<std::string>& excluded) const {
    std::vector<Conversation> kept;
    for (const auto& c : conversations_) {
      if (!excluded.contains(c.conversation_id)) kept.push_back(c);
    }
    return Corpus(std::move(kept));
  }

  friend bool operator==(const Corpus& a, const Corpus& b) { return a.conversations_ == b.conversations_; }

 private:
  std::vector<Conversation> conversations_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::size_t>> by_bot_;
  std::map<std::string, std::vector<std::size_t>> by_user_;
  std::vector<std::string> bots_;
};

// ---------------------------------------------------------------------------
// Parsing

struct ParseIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct ParseReport {
  std::size_t lines_read = 0;
  std::size_t records_accepted = 0;
  std::vector<ParseIssue> issues;
  bool empty() const noexcept { return issues.empty(); }
};

inline nlohmann::json to_json(const ParseReport& r) {
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& i : r.issues) issues.push_back({{"line", i.line}, {"message", i.message}});
  return {{"lines_read", r.lines_read}, {"records_accepted", r.records_accepted}, {"issues", issues}};
}

struct ParsedCorpus {
  Corpus corpus;
  ParseReport report;
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(std::string("missing field '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline std::int64_t require_integer(const nlohmann::json& obj, const char* key) {
  const auto& v = require(obj, key);
  if (!v.is_number_integer()) throw SchemaError(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

}  // namespace detail

/// Decode one conversation object. Throws SchemaError on structural problems.
/// Out-of-range rating scores are kept; validate() reports them.
inline Conversation conversation_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("record is not a JSON object");
  Conversation c;
  c.conversation_id = detail::require_string(j, "conversation_id");
  if (c.conversation_id.empty()) throw SchemaError("conversation_id is empty");
  c.bot_id = detail::require_string(j, "bot_id");
  c.user_id = detail::require_string(j, "user_id");
  const auto& turns = detail::require(j, "turns");
  if (!turns.is_array() || turns.empty()) throw SchemaError("turns must be a non-empty array");
  for (std::size_t k = 0; k < turns.size(); ++k) {
    const auto& t = turns[k];
    if (!t.is_object()) throw SchemaError("turn " + std::to_string(k) + " is not an object");
    Turn turn;
    const auto speaker = parse_speaker(detail::require_string(t, "speaker"));
    if (!speaker) throw SchemaError("turn " + std::to_string(k) + ": speaker must be \"user\" or \"bot\"");
    turn.speaker = *speaker;
    turn.text = detail::require_string(t, "text");
    if (!text::has_content(turn.text)) throw SchemaError("turn " + std::to_string(k) + ": empty text");
    turn.timestamp_ms = detail::require_integer(t, "ts");
    if (turn.timestamp_ms < 0) throw SchemaError("turn " + std::to_string(k) + ": negative timestamp");
    c.turns.push_back(std::move(turn));
  }
  if (auto it = j.find("rating"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw SchemaError("rating must be an object");
    RatingRecord r;
    r.score = static_cast<int>(detail::require_integer(*it, "score"));
    const auto source = parse_rating_source(detail::require_string(*it, "source"));
    if (!source) throw SchemaError("rating source must be \"user\" or \"engagement_evaluator\"");
    r.source = *source;
    if (auto f = it->find("feedback"); f != it->end() && !f->is_null()) {
      if (!f->is_string()) throw SchemaError("feedback must be a string");
      r.feedback = f->get<std::string>();
    }
    c.rating = std::move(r);
  }
  return c;
}

inline nlohmann::ordered_json to_json(const Conversation& c) {
  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (const auto& t : c.turns) {
    turns.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}, {"ts", t.timestamp_ms}});
  }
  nlohmann::ordered_json j = {
      {"conversation_id", c.conversation_id}, {"bot_id", c.bot_id}, {"user_id", c.user_id}, {"turns", turns}};
  if (c.rating) {
    nlohmann::ordered_json r = {{"score", c.rating->score}, {"source", to_string(c.rating->source)}};
    if (c.rating->feedback) r["feedback"] = *c.rating->feedback;
    j["rating"] = r;
  }
  return j;
}

/// Parse line-delimited conversation records.
///
/// Malformed lines are skipped and reported with their line number; blank
/// lines are ignored. Duplicate conversation ids throw ValidationError citing
/// both line numbers; a stream read failure throws IoError.
inline ParsedCorpus parse_corpus(std::istream& in) {
  ParsedCorpus out;
  std::vector<Conversation> conversations;
  std::map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::has_content(line)) continue;
    ++out.report.lines_read;
    Conversation c;
    try {
      c = conversation_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      out.report.issues.push_back({line_no, std::string("invalid JSON: ") + e.what()});
      continue;
    } catch (const SchemaError& e) {
      out.report.issues.push_back({line_no, e.what()});
      continue;
    }
    if (auto [it, inserted] = first_line.emplace(c.conversation_id, line_no); !inserted) {
      throw ValidationError("duplicate conversation_id '" + c.conversation_id + "' on lines " +
                            std::to_string(it->second) + " and " + std::to_string(line_no));
    }
    conversations.push_back(std::move(c));
  }
  if (in.bad()) throw IoError("failed reading corpus stream");
  out.report.records_accepted = conversations.size();
  out.corpus = Corpus(std::move(conversations));
  return out;
}

/// Write the corpus as JSONL, one conversation per LF-terminated line.
inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& c : corpus.conversations()) out << to_json(c).dump() << '\n';
  if (!out) throw IoError("failed writing corpus stream");
}

// ---------------------------------------------------------------------------
// Validation

enum class FindingKind { starts_with_bot, non_alternating, decreasing_timestamp, score_out_of_range };

inline const char* to_string(FindingKind k) noexcept {
  switch (k) {
    case FindingKind::starts_with_bot: return "starts_with_bot";
    case FindingKind::non_alternating: return "non_alternating";
    case FindingKind::decreasing_timestamp: return "decreasing_timestamp";
    case FindingKind::score_out_of_range: return "score_out_of_range";
  }
  return "unknown";
}

struct ValidationFinding {
  std::string conversation_id;
  std::optional<std::size_t> turn_index;  // absent for conversation-level findings
  FindingKind kind{};
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  bool empty() const noexcept { return findings.empty(); }

  std::set<std::string> flagged_conversations() const {
    std::set<std::string> ids;
    for (const auto& f : findings) ids.insert(f.conversation_id);
    return ids;
  }
};

inline nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : r.findings) {
    nlohmann::json j = {{"conversation_id", f.conversation_id}, {"kind", to_string(f.kind)}, {"message", f.message}};
    j["turn_index"] = f.turn_index ? nlohmann::json(*f.turn_index) : nlohmann::json(nullptr);
    arr.push_back(std::move(j));
  }
  return {{"findings", arr}};
}

/// Report every invariant violation; violations are flagged, never repaired.
inline ValidationReport validate(const Corpus& corpus) {
  ValidationReport report;
  for (const auto& c : corpus.conversations()) {
    if (!c.turns.empty() && c.turns.front().speaker != Speaker::user) {
      report.findings.push_back({c.conversation_id, 0, FindingKind::starts_with_bot, "first turn is spoken by the bot"});
    }
    for (std::size_t k = 1; k < c.turns.size(); ++k) {
      if (c.turns[k].speaker == c.turns[k - 1].speaker) {
        report.findings.push_back({c.conversation_id, k, FindingKind::non_alternating,
                                   std::string("consecutive ") + to_string(c.turns[k].speaker) + " turns"});
      }
      if (c.turns[k].timestamp_ms < c.turns[k - 1].timestamp_ms) {
        report.findings.push_back(
            {c.conversation_id, k, FindingKind::decreasing_timestamp, "timestamp earlier than previous turn"});
      }
    }
    if (c.rating && (c.rating->score < 1 || c.rating->score > 5)) {
      report.findings.push_back({c.conversation_id, std::nullopt, FindingKind::score_out_of_range,
                                 "rating score " + std::to_string(c.rating->score) + " outside [1, 5]"});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rating subsets and statistics

/// User-source ratings per bot restricted to users with at least
/// `min_conversations` conversations (rated or not) with that bot.
/// Every bot in the corpus gets an entry, possibly empty.
inline std::map<std::string, std::vector<RatingRecord>> frequent_user_ratings(const Corpus& corpus,
                                                                               std::size_t min_conversations = 2) {
  if (min_conversations == 0) throw ArgumentError("min_conversations must be positive");
  std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
  for (const auto& c : corpus.conversations()) ++pair_counts[{c.bot_id, c.user_id}];
  std::map<std::string, std::vector<RatingRecord>> out;
  for (const auto& bot : corpus.bots()) out[bot];
  for (const auto& c : corpus.conversations()) {
    if (!c.rating || c.rating->source != RatingSource::user) continue;
    if (pair_counts[{c.bot_id, c.user_id}] >= min_conversations) out[c.bot_id].push_back(*c.rating);
  }
  return out;
}

struct CorpusStats {
  std::size_t conversation_count = 0;
  std::size_t turn_count = 0;
  std::optional<double> mean_turns_per_conversation;
  std::map<RatingSource, double> mean_rating_by_source;  // only sources with ratings
  std::map<RatingSource, std::size_t> rating_count_by_source;
  std::optional<double> frequent_user_rating_mean;
  std::size_t frequent_user_rating_count = 0;
};

inline CorpusStats corpus_stats(const Corpus& corpus, std::size_t min_conversations = 2) {
  CorpusStats s;
  s.conversation_count = corpus.size();
  std::map<RatingSource, std::vector<double>> by_source;
  for (const auto& c : corpus.conversations()) {
    s.turn_count += c.turns.size();
    if (c.rating) by_source[c.rating->source].push_back(c.rating->score);
  }
  if (s.conversation_count > 0) {
    s.mean_turns_per_conversation = static_cast<double>(s.turn_count) / static_cast<double>(s.conversation_count);
  }
  for (const auto& [src, scores] : by_source) {
    s.mean_rating_by_source[src] = stats::mean(scores);
    s.rating_count_by_source[src] = scores.size();
  }
  std::vector<double> frequent;
  for (const auto& [_, ratings] : frequent_user_ratings(corpus, min_conversations)) {
    for (const auto& r : ratings) frequent.push_back(r.score);
  }
  s.frequent_user_rating_count = frequent.size();
  if (!frequent.empty()) s.frequent_user_rating_mean = stats::mean(frequent);
  return s;
}

inline nlohmann::ordered_json to_json(const CorpusStats& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (auto src : {RatingSource::user, RatingSource::engagement_evaluator}) {
    auto it = s.mean_rating_by_source.find(src);
    means[to_string(src)] = it == s.mean_rating_by_source.end() ? nlohmann::ordered_json() : nlohmann::ordered_json(it->second);
    auto ct = s.rating_count_by_source.find(src);
    counts[to_string(src)] = ct == s.rating_count_by_source.end() ? 0 : ct->second;
  }
  return {{"conversation_count", s.conversation_count},
          {"turn_count", s.turn_count},
          {"mean_turns_per_conversation", opt(s.mean_turns_per_conversation)},
          {"mean_rating_by_source", means},
          {"rating_count_by_source", counts},
          {"frequent_user_rating_mean", opt(s.frequent_user_rating_mean)},
          {"frequent_user_rating_count", s.frequent_user_rating_count}};
}

// ---------------------------------------------------------------------------
// Coherence annotations

enum class CoherenceLabel { coherent, incoherent };

struct CoherenceAnnotation {
  std::string conversation_id;
  std::size_t turn_index = 0;
  CoherenceLabel label = CoherenceLabel::coherent;
  friend bool operator==(const CoherenceAnnotation&, const CoherenceAnnotation&) = default;
};

struct ParsedAnnotations {
  std::vector<CoherenceAnnotation> annotations;
  ParseReport report;
};

inline ParsedAnnotations parse_annotations(std::istream& in) {
  ParsedAnnotations out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::has_content(line)) continue;
    ++out.report.lines_read;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw SchemaError("record is not a JSON object");
      CoherenceAnnotation a;
      a.conversation_id = detail::require_string(j, "conversation_id");
      const auto idx = detail::require_integer(j, "turn_index");
      if (idx < 0) throw SchemaError("negative turn_index");
      a.turn_index = static_cast<std::size_t>(idx);
      const auto label = detail::require_string(j, "label");
      if (label == "coherent") {
        a.label = CoherenceLabel::coherent;
      } else if (label == "incoherent") {
        a.label = CoherenceLabel::incoherent;
      } else {
        throw SchemaError("label must be \"coherent\" or \"incoherent\"");
      }
      out.annotations.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      out.report.issues.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const SchemaError& e) {
      out.report.issues.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw IoError("failed reading annotation stream");
  out.report.records_accepted = out.annotations.size();
  return out;
}

inline void write_annotations(std::ostream& out, std::span<const CoherenceAnnotation> annotations) {
  for (const auto& a : annotations) {
    nlohmann::ordered_json j = {{"conversation_id", a.conversation_id},
                                {"turn_index", a.turn_index},
                                {"label", a.label == CoherenceLabel::coherent ? "coherent" : "incoherent"}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing annotation stream");
}

}  // namespace convoeval
