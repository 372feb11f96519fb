// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#include "convoeval/corpus.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <streambuf>

#include "convoeval/random.hpp"
#include "convoeval/synth.hpp"

namespace convoeval {
namespace {

Conversation make_conversation(std::string id, std::string bot, std::string user, std::size_t turns,
                               std::optional<int> score = std::nullopt,
                               RatingSource source = RatingSource::user) {
  Conversation c{std::move(id), std::move(bot), std::move(user), {}, std::nullopt};
  for (std::size_t t = 0; t < turns; ++t) {
    c.turns.push_back({t % 2 == 0 ? Speaker::user : Speaker::bot, "turn " + std::to_string(t),
                       static_cast<std::int64_t>(1000 * t)});
  }
  if (score) c.rating = RatingRecord{*score, source, std::nullopt};
  return c;
}

const char* kGoodLine =
    R"({"conversation_id":"c1","bot_id":"A","user_id":"u1","turns":[{"speaker":"user","text":"hi","ts":0},{"speaker":"bot","text":"hello there","ts":1500}],"rating":{"score":4,"source":"user","feedback":"nice"}})";
const char* kGoodLine2 =
    R"({"conversation_id":"c2","bot_id":"B","user_id":"u2","turns":[{"speaker":"user","text":"tell me about nba","ts":10}]})";

TEST(ParseCorpus, EmptyStream) {
  std::istringstream in("");
  const auto parsed = parse_corpus(in);
  EXPECT_TRUE(parsed.corpus.empty());
  EXPECT_TRUE(parsed.report.empty());
}

TEST(ParseCorpus, MalformedLineIsReportedWithLineNumber) {
  std::istringstream in(std::string(kGoodLine) + "\n" + kGoodLine2 + "\n{\"conversation_id\": \"c3\", \"bot_id\": 7}\n");
  const auto parsed = parse_corpus(in);
  ASSERT_EQ(parsed.corpus.size(), 2u);
  ASSERT_EQ(parsed.report.issues.size(), 1u);
  EXPECT_EQ(parsed.report.issues[0].line, 3u);
  EXPECT_EQ(parsed.corpus[0].rating->feedback, "nice");
  EXPECT_FALSE(parsed.corpus[1].rating.has_value());
}

TEST(ParseCorpus, SchemaViolationsAreMalformed) {
  const char* bad[] = {
      "not json",
      R"([1,2])",
      R"({"conversation_id":"x","bot_id":"A","user_id":"u","turns":[]})",
      R"({"conversation_id":"x","bot_id":"A","user_id":"u","turns":[{"speaker":"robot","text":"a","ts":0}]})",
      R"({"conversation_id":"x","bot_id":"A","user_id":"u","turns":[{"speaker":"user","text":"   ","ts":0}]})",
      R"({"conversation_id":"x","bot_id":"A","user_id":"u","turns":[{"speaker":"user","text":"a","ts":-5}]})",
      R"({"conversation_id":"x","bot_id":"A","user_id":"u","turns":[{"speaker":"user","text":"a","ts":1.5}]})",
      R"({"conversation_id":"x","bot_id":"A","user_id":"u","turns":[{"speaker":"user","text":"a","ts":1}],"rating":{"score":3,"source":"critic"}})",
  };
  for (const char* line : bad) {
    std::istringstream in(line);
    const auto parsed = parse_corpus(in);
    EXPECT_EQ(parsed.corpus.size(), 0u) << line;
    EXPECT_EQ(parsed.report.issues.size(), 1u) << line;
  }
}

TEST(ParseCorpus, BlankLinesAreSkipped) {
  std::istringstream in(std::string("\n") + kGoodLine + "\n\n   \n");
  const auto parsed = parse_corpus(in);
  EXPECT_EQ(parsed.corpus.size(), 1u);
  EXPECT_TRUE(parsed.report.empty());
}

TEST(ParseCorpus, DuplicateIdNamesBothLines) {
  std::istringstream in(std::string(kGoodLine) + "\n" + kGoodLine2 + "\n" + kGoodLine + "\n");
  try {
    parse_corpus(in);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lines 1 and 3"), std::string::npos) << msg;
  }
}

struct FailingBuf : std::streambuf {
  int_type underflow() override { throw std::runtime_error("device error"); }
};

TEST(ParseCorpus, UnreadableStreamIsIoError) {
  FailingBuf buf;
  std::istream in(&buf);
  EXPECT_THROW(parse_corpus(in), IoError);
}

TEST(ParseCorpus, OutOfRangeScoreIsKeptForValidation) {
  std::istringstream in(
      R"({"conversation_id":"x","bot_id":"A","user_id":"u","turns":[{"speaker":"user","text":"a","ts":1}],"rating":{"score":9,"source":"user"}})");
  const auto parsed = parse_corpus(in);
  ASSERT_EQ(parsed.corpus.size(), 1u);
  const auto report = validate(parsed.corpus);
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].kind, FindingKind::score_out_of_range);
}

TEST(ParseCorpus, RoundTripsGeneratedCorpus) {
  auto profiles = synth::default_profiles(1);
  const auto gen = synth::generate_corpus(profiles, 1000, 77);
  ASSERT_EQ(gen.corpus.size(), 1000u);
  std::ostringstream out;
  write_corpus(out, gen.corpus);
  std::istringstream in(out.str());
  const auto parsed = parse_corpus(in);
  EXPECT_TRUE(parsed.report.empty());
  EXPECT_EQ(parsed.corpus, gen.corpus);
  std::ostringstream again;
  write_corpus(again, parsed.corpus);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Corpus, ConstructorRejectsDuplicateIds) {
  std::vector<Conversation> cs = {make_conversation("a", "A", "u", 2), make_conversation("a", "B", "v", 2)};
  EXPECT_THROW(Corpus{cs}, ValidationError);
}

TEST(Corpus, IndicesAreConsistent) {
  Rng rng(3);
  std::vector<Conversation> cs;
  for (int i = 0; i < 300; ++i) {
    cs.push_back(make_conversation("c" + std::to_string(i), "bot" + std::to_string(uniform_index(rng, 5)),
                                   "u" + std::to_string(uniform_index(rng, 40)), 1 + uniform_index(rng, 6)));
  }
  const Corpus corpus(cs);
  std::size_t total = 0;
  for (const auto& bot : corpus.bots()) {
    for (auto i : corpus.conversations_of_bot(bot)) EXPECT_EQ(corpus[i].bot_id, bot);
    total += corpus.conversations_of_bot(bot).size();
  }
  EXPECT_EQ(total, corpus.size());
  EXPECT_EQ(corpus.find("c17"), 17u);
  EXPECT_FALSE(corpus.find("nope").has_value());
}

TEST(FrequentUserRatings, WorkedExample) {
  // u1 has 2 rated conversations with A and 1 with B.
  const Corpus corpus({make_conversation("1", "A", "u1", 2, 5), make_conversation("2", "A", "u1", 2, 3),
                       make_conversation("3", "B", "u1", 2, 4)});
  const auto fr = frequent_user_ratings(corpus);
  ASSERT_EQ(fr.at("A").size(), 2u);
  EXPECT_TRUE(fr.at("B").empty());
}

TEST(FrequentUserRatings, UnratedConversationsCountTowardFrequency) {
  const Corpus corpus({make_conversation("1", "A", "u1", 2, 5), make_conversation("2", "A", "u1", 2)});
  EXPECT_EQ(frequent_user_ratings(corpus).at("A").size(), 1u);
}

TEST(FrequentUserRatings, EveryUserOncePerBotGivesEmptyLists) {
  std::vector<Conversation> cs;
  int id = 0;
  for (std::string bot : {"A", "B", "C"})
    for (std::string user : {"u1", "u2", "u3"}) cs.push_back(make_conversation(std::to_string(id++), bot, user, 2, 3));
  const auto fr = frequent_user_ratings(Corpus(cs));
  EXPECT_EQ(fr.size(), 3u);
  for (const auto& [_, ratings] : fr) EXPECT_TRUE(ratings.empty());
}

TEST(FrequentUserRatings, ZeroThresholdIsAnError) {
  EXPECT_THROW(frequent_user_ratings(Corpus{}, 0), ArgumentError);
}

TEST(FrequentUserRatings, MatchesBruteForcePairCounting) {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Conversation> cs;
    for (int i = 0; i < 120; ++i) {
      std::optional<int> score;
      if (bernoulli(rng, 0.7)) score = 1 + static_cast<int>(uniform_index(rng, 5));
      const auto source = bernoulli(rng, 0.8) ? RatingSource::user : RatingSource::engagement_evaluator;
      cs.push_back(make_conversation("c" + std::to_string(i), "b" + std::to_string(uniform_index(rng, 3)),
                                     "u" + std::to_string(uniform_index(rng, 25)), 2, score, source));
    }
    const Corpus corpus(cs);
    const std::size_t min = 1 + uniform_index(rng, 3);
    const auto got = frequent_user_ratings(corpus, min);
    for (const auto& bot : corpus.bots()) {
      std::vector<int> expected;
      for (const auto& c : cs) {
        if (c.bot_id != bot || !c.rating || c.rating->source != RatingSource::user) continue;
        std::size_t n = 0;
        for (const auto& d : cs) n += (d.bot_id == bot && d.user_id == c.user_id);
        if (n >= min) expected.push_back(c.rating->score);
      }
      std::vector<int> actual;
      for (const auto& r : got.at(bot)) actual.push_back(r.score);
      EXPECT_EQ(actual, expected);
    }
  }
}

TEST(FrequentUserRatings, ThresholdOneIsAllUserRatings) {
  Rng rng(9);
  std::vector<Conversation> cs;
  for (int i = 0; i < 60; ++i) {
    cs.push_back(make_conversation("c" + std::to_string(i), "b" + std::to_string(i % 4), "u" + std::to_string(i), 2,
                                   1 + i % 5, i % 3 == 0 ? RatingSource::engagement_evaluator : RatingSource::user));
  }
  const Corpus corpus(cs);
  const auto fr = frequent_user_ratings(corpus, 1);
  for (const auto& bot : corpus.bots()) {
    std::size_t expected = 0;
    for (auto i : corpus.conversations_of_bot(bot))
      expected += corpus[i].rating && corpus[i].rating->source == RatingSource::user;
    EXPECT_EQ(fr.at(bot).size(), expected);
  }
}

TEST(CorpusStats, MeanTurnsMirrorsTableValue) {
  const Corpus corpus({make_conversation("1", "A", "u", 10), make_conversation("2", "A", "v", 14)});
  const auto s = corpus_stats(corpus);
  EXPECT_EQ(s.conversation_count, 2u);
  EXPECT_EQ(s.turn_count, 24u);
  EXPECT_EQ(s.mean_turns_per_conversation, 12.0);
  EXPECT_TRUE(s.mean_rating_by_source.empty());
  EXPECT_FALSE(s.frequent_user_rating_mean.has_value());
}

TEST(CorpusStats, EmptyCorpus) {
  const auto s = corpus_stats(Corpus{});
  EXPECT_EQ(s.conversation_count, 0u);
  EXPECT_FALSE(s.mean_turns_per_conversation.has_value());
}

TEST(CorpusStats, RatingMeansBySource) {
  const Corpus corpus({make_conversation("1", "A", "u", 2, 5), make_conversation("2", "A", "u", 2, 2),
                       make_conversation("3", "A", "v", 2, 1, RatingSource::engagement_evaluator),
                       make_conversation("4", "A", "w", 2)});
  const auto s = corpus_stats(corpus);
  EXPECT_DOUBLE_EQ(s.mean_rating_by_source.at(RatingSource::user), 3.5);
  EXPECT_DOUBLE_EQ(s.mean_rating_by_source.at(RatingSource::engagement_evaluator), 1.0);
  EXPECT_DOUBLE_EQ(*s.frequent_user_rating_mean, 3.5);
}

TEST(CorpusStats, TurnIdentityHoldsOnRandomCorpora) {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Conversation> cs;
    const auto n = 1 + uniform_index(rng, 50);
    for (std::size_t i = 0; i < n; ++i)
      cs.push_back(make_conversation(std::to_string(i), "A", "u", 1 + uniform_index(rng, 30)));
    const auto s = corpus_stats(Corpus(cs));
    const double lhs = *s.mean_turns_per_conversation * static_cast<double>(s.conversation_count);
    EXPECT_NEAR(lhs, static_cast<double>(s.turn_count), 1e-9 * static_cast<double>(s.turn_count));
  }
}

TEST(CorpusStats, PlantedMeanRatingInsideBootstrapInterval) {
  auto profiles = synth::default_profiles(1);
  profiles[0].rating_model = {3.0, 0.0, 0.0, 0.0, 0.8, {}};
  profiles[0].evaluator_fraction = 0.0;
  const auto gen = synth::generate_corpus(profiles, 800, 5);
  std::vector<double> scores;
  for (const auto& c : gen.corpus.conversations())
    if (c.rating) scores.push_back(c.rating->score);
  const auto s = corpus_stats(gen.corpus);
  const auto ci = stats::bootstrap_ci(scores, 0.95, 2000, 1);
  EXPECT_DOUBLE_EQ(ci.point, s.mean_rating_by_source.at(RatingSource::user));
  EXPECT_TRUE(ci.contains(3.0)) << ci.lower << " " << ci.upper;
}

TEST(Validate, WellFormedCorpusHasNoFindings) {
  const Corpus corpus({make_conversation("1", "A", "u", 6, 3), make_conversation("2", "B", "u", 3)});
  EXPECT_TRUE(validate(corpus).empty());
}

TEST(Validate, ConsecutiveUserTurns) {
  auto c = make_conversation("1", "A", "u", 4);
  // user, user, bot, user
  c.turns[1].speaker = Speaker::user;
  c.turns[2].speaker = Speaker::bot;
  c.turns[3].speaker = Speaker::user;
  const auto report = validate(Corpus({c}));
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].kind, FindingKind::non_alternating);
  EXPECT_EQ(report.findings[0].turn_index, 1u);
}

TEST(Validate, DecreasingTimestampCitesTurnIndex) {
  auto c = make_conversation("1", "A", "u", 6);
  c.turns[4].timestamp_ms = 100;
  const auto report = validate(Corpus({c}));
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].kind, FindingKind::decreasing_timestamp);
  EXPECT_EQ(report.findings[0].turn_index, 4u);
  EXPECT_EQ(report.flagged_conversations(), std::set<std::string>{"1"});
}

TEST(Validate, BotOpeningIsFlagged) {
  auto c = make_conversation("1", "A", "u", 1);
  c.turns[0].speaker = Speaker::bot;
  const auto report = validate(Corpus({c}));
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].kind, FindingKind::starts_with_bot);
}

TEST(Annotations, ParseAndReportMalformed) {
  std::istringstream in(
      "{\"conversation_id\":\"c1\",\"turn_index\":1,\"label\":\"incoherent\"}\n"
      "{\"conversation_id\":\"c1\",\"turn_index\":3,\"label\":\"meh\"}\n"
      "{\"conversation_id\":\"c1\",\"turn_index\":3,\"label\":\"coherent\"}\n");
  const auto parsed = parse_annotations(in);
  ASSERT_EQ(parsed.annotations.size(), 2u);
  EXPECT_EQ(parsed.annotations[0].label, CoherenceLabel::incoherent);
  ASSERT_EQ(parsed.report.issues.size(), 1u);
  EXPECT_EQ(parsed.report.issues[0].line, 2u);
}

}  // namespace
}  // namespace convoeval
