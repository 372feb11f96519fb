// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

// convoeval: evaluate and rank conversational agents from transcript corpora.

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "convoeval/corpus.hpp"
#include "convoeval/metrics.hpp"
#include "convoeval/predictor.hpp"
#include "convoeval/report.hpp"
#include "convoeval/synth.hpp"
#include "convoeval/topics.hpp"
#include "convoeval/unify.hpp"

namespace {

using namespace convoeval;

constexpr int kExitOk = 0;
constexpr int kExitFindings = 1;
constexpr int kExitUsage = 2;
constexpr std::uint64_t kDefaultSeed = 42;

/// Bad invocation or unusable input; exits with the usage status.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// I/O helpers

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open input file: " + path);
  return in;
}

nlohmann::json read_json(const std::string& path) {
  auto in = open_input(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": invalid JSON: " + e.what());
  }
}

nlohmann::ordered_json read_ordered_json(const std::string& path) {
  auto in = open_input(path);
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path + ": invalid JSON: " + e.what());
  }
}

/// Write to `path`, or stdout when it is empty.
void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open output file: " + path);
  out << content;
  if (!out) throw IoError("failed writing " + path);
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

std::uint64_t effective_seed(const std::optional<std::uint64_t>& flag) {
  std::uint64_t seed = kDefaultSeed;
  if (flag) {
    seed = *flag;
  } else if (const char* env = std::getenv("CONVOEVAL_SEED"); env && *env) {
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw UsageError("CONVOEVAL_SEED must be an unsigned integer, got '" + std::string(s) + "'");
    }
  }
  std::cerr << "seed: " << seed << '\n';
  return seed;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

topics::TopicLexicon load_lexicon(const std::string& path) {
  if (path.empty()) return topics::default_lexicon();
  return topics::lexicon_from_json(read_ordered_json(path));
}

struct CorpusInput {
  std::string path;
  std::string report;
  bool strict = false;
};

void add_corpus_input(CLI::App* cmd, CorpusInput& in, const std::string& help = "Conversation JSONL") {
  cmd->add_option("--corpus", in.path, help)->required()->check(CLI::ExistingFile);
  cmd->add_option("--report", in.report, "Write the JSON parse report here instead of stderr");
  cmd->add_flag("--strict", in.strict, "Exclude conversations with validation findings");
}

/// Parse a corpus and write its parse report to stderr or the report path.
/// In strict mode conversations carrying validation findings are dropped.
Corpus load_corpus(const CorpusInput& input) {
  auto in = open_input(input.path);
  auto parsed = parse_corpus(in);
  if (input.report.empty()) {
    std::cerr << to_json(parsed.report).dump() << '\n';
  } else {
    write_output(input.report, to_json(parsed.report).dump(2) + "\n");
  }
  if (!input.strict) return std::move(parsed.corpus);
  const auto flagged = validate(parsed.corpus).flagged_conversations();
  if (flagged.empty()) return std::move(parsed.corpus);
  std::vector<Conversation> kept;
  for (const auto& c : parsed.corpus.conversations()) {
    if (!flagged.contains(c.conversation_id)) kept.push_back(c);
  }
  std::cerr << input.path << ": excluded " << flagged.size() << " flagged conversation(s)\n";
  return Corpus(std::move(kept));
}

std::vector<CoherenceAnnotation> load_annotations(const std::string& path) {
  if (path.empty()) return {};
  auto in = open_input(path);
  auto parsed = parse_annotations(in);
  if (!parsed.report.empty()) {
    std::cerr << path << ": skipped " << parsed.report.issues.size() << " malformed record(s)\n";
  }
  return std::move(parsed.annotations);
}

topics::Classifier load_classifier(const std::string& model_path, const topics::TopicLexicon& lexicon) {
  if (model_path.empty()) return topics::LexiconClassifier(lexicon);
  return topics::DanClassifier::from_json(read_json(model_path));
}

// ---------------------------------------------------------------------------
// Subcommands. Each registers its options and returns the action to run.

using Action = std::function<int()>;

Action add_validate(CLI::App& app) {
  auto* cmd = app.add_subcommand("validate", "Check a corpus for malformed records and invariant violations");
  auto corpus = std::make_shared<std::string>();
  auto report_path = std::make_shared<std::string>();
  auto strict = std::make_shared<bool>(false);
  cmd->add_option("--corpus", *corpus, "Conversation JSONL")->required()->check(CLI::ExistingFile);
  cmd->add_option("--report", *report_path, "Write the JSON report here instead of stderr");
  cmd->add_flag("--strict", *strict, "Exit 1 when any finding or malformed record is present");
  return [=] {
    auto in = open_input(*corpus);
    const auto parsed = parse_corpus(in);
    const auto findings = validate(parsed.corpus);
    nlohmann::ordered_json j = {{"parse", to_json(parsed.report)}, {"validation", to_json(findings)}};
    if (report_path->empty()) {
      std::cerr << dump(j);
    } else {
      write_output(*report_path, dump(j));
    }
    std::cout << parsed.corpus.size() << " conversation(s), " << parsed.report.issues.size()
              << " malformed record(s), " << findings.findings.size() << " finding(s)\n";
    const bool clean = parsed.report.empty() && findings.empty();
    return *strict && !clean ? kExitFindings : kExitOk;
  };
}

Action add_stats(CLI::App& app) {
  auto* cmd = app.add_subcommand("stats", "Corpus summary statistics");
  auto corpus = std::make_shared<CorpusInput>();
  auto out = std::make_shared<std::string>();
  auto min_conv = std::make_shared<std::size_t>(2);
  add_corpus_input(cmd, *corpus);
  cmd->add_option("--out", *out, "Output JSON (default stdout)");
  cmd->add_option("--frequent-min", *min_conv, "Conversations with a bot that make a user frequent")
      ->capture_default_str();
  return [=] {
    write_output(*out, dump(to_json(corpus_stats(load_corpus(*corpus), *min_conv))));
    return kExitOk;
  };
}

std::vector<topics::LabeledUtterance> load_labeled(const std::string& path) {
  auto in = open_input(path);
  std::vector<topics::LabeledUtterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::has_content(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("text").get<std::string>(), j.at("label").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

/// Utterances whose keywords all point at one non-fallback domain, labelled
/// with that domain.
std::vector<topics::LabeledUtterance> silver_labels(const Corpus& corpus, const topics::TopicLexicon& lexicon) {
  std::vector<topics::LabeledUtterance> out;
  const auto fallback = lexicon.domains().fallback();
  for (const auto& c : corpus.conversations()) {
    for (const auto& t : c.turns) {
      std::set<std::string> owners;
      for (const auto& [kw, domain] : topics::extract_keywords(t.text, lexicon)) owners.insert(domain);
      if (owners.size() != 1) continue;
      if (fallback && *owners.begin() == lexicon.domains().name(*fallback)) continue;
      out.push_back({t.text, *owners.begin()});
    }
  }
  return out;
}

Action add_train_classifier(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-classifier", "Train the deep averaging network topic classifier");
  struct Opts {
    std::string data, lexicon, out;
    CorpusInput corpus;
    std::optional<std::uint64_t> seed;
    topics::DanConfig cfg;
    std::size_t folds = 0;
  };
  auto o = std::make_shared<Opts>();
  auto* data = cmd->add_option("--data", o->data, "Labelled JSONL: {\"text\": ..., \"label\": ...}")
                   ->check(CLI::ExistingFile);
  auto* corpus = cmd->add_option("--corpus", o->corpus.path, "Derive labels from keyword-unambiguous turns of a corpus")
                     ->check(CLI::ExistingFile);
  data->excludes(corpus);
  cmd->add_option("--report", o->corpus.report, "Write the corpus parse report here instead of stderr");
  cmd->add_option("--lexicon", o->lexicon, "Lexicon JSON supplying the domain set")->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out, "Model JSON")->required();
  cmd->add_option("--seed", o->seed, "Random seed");
  cmd->add_option("--dim", o->cfg.embedding_dim, "Embedding size")->capture_default_str();
  cmd->add_option("--hidden", o->cfg.hidden, "Hidden layer sizes")->capture_default_str();
  cmd->add_option("--epochs", o->cfg.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", o->cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--dropout", o->cfg.word_dropout, "Word dropout probability")->capture_default_str();
  cmd->add_option("--cv", o->folds, "Also report k-fold cross-validated accuracy");
  return [=] {
    if (o->data.empty() == o->corpus.path.empty()) throw UsageError("train-classifier needs exactly one of --data or --corpus");
    auto cfg = o->cfg;
    cfg.seed = effective_seed(o->seed);
    const auto lexicon = load_lexicon(o->lexicon);
    const auto labeled = o->data.empty() ? silver_labels(load_corpus(o->corpus), lexicon) : load_labeled(o->data);
    std::cerr << labeled.size() << " labelled utterance(s)\n";
    if (o->folds > 0) {
      const auto cv = topics::cross_validate(labeled, o->folds, lexicon.domains(), cfg);
      std::cout << o->folds << "-fold accuracy: " << report::fixed(cv.mean_accuracy, 4) << '\n';
    }
    write_output(o->out, to_json(topics::train_dan(labeled, lexicon.domains(), cfg)).dump() + "\n");
    return kExitOk;
  };
}

Action add_annotate(CLI::App& app) {
  auto* cmd = app.add_subcommand("annotate", "Label every turn with a topic domain");
  struct Opts {
    std::string lexicon, classifier, out;
    CorpusInput corpus;
  };
  auto o = std::make_shared<Opts>();
  add_corpus_input(cmd, o->corpus);
  cmd->add_option("--lexicon", o->lexicon, "Lexicon JSON (default: built-in)")->check(CLI::ExistingFile);
  cmd->add_option("--classifier", o->classifier, "Trained DAN model JSON (default: lexicon matching)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out, "Output JSONL (default stdout)");
  return [=] {
    const auto corpus = load_corpus(o->corpus);
    const auto classifier = load_classifier(o->classifier, load_lexicon(o->lexicon));
    const auto annotated = topics::annotate_corpus(corpus, classifier);
    std::ostringstream out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      std::vector<std::string> names;
      for (const auto& p : annotated.predictions[i]) names.push_back(annotated.domains.name(p.label));
      nlohmann::ordered_json j = {{"conversation_id", corpus[i].conversation_id}, {"turn_domains", names}};
      const auto seq = annotated.sequence(corpus, i);
      j["conversation_domain"] = seq.empty() ? nlohmann::ordered_json(nullptr)
                                             : nlohmann::ordered_json(annotated.domains.name(topics::conversation_domain(seq)));
      out << j.dump() << '\n';
    }
    write_output(o->out, out.str());
    return kExitOk;
  };
}

Action add_metrics(CLI::App& app) {
  auto* cmd = app.add_subcommand("metrics", "Compute the per-bot metric matrix with bootstrap intervals");
  struct Opts {
    CorpusInput corpus;
    std::string annotations, lexicon, classifier, out, csv;
    std::optional<std::uint64_t> seed;
    metrics::MetricConfig cfg;
    std::string rer_denominator = "bot-turns", depth_turns = "both", rcov = "bot-entropy", spread;
  };
  auto o = std::make_shared<Opts>();
  add_corpus_input(cmd, o->corpus);
  cmd->add_option("--annotations", o->annotations, "Coherence annotation JSONL")->check(CLI::ExistingFile);
  cmd->add_option("--lexicon", o->lexicon, "Lexicon JSON (default: built-in)")->check(CLI::ExistingFile);
  cmd->add_option("--classifier", o->classifier, "Trained DAN model JSON (default: lexicon matching)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out, "Matrix JSON (default stdout)");
  cmd->add_option("--csv", o->csv, "Also write the matrix as long-format CSV");
  cmd->add_option("--seed", o->seed, "Bootstrap seed");
  cmd->add_option("--level", o->cfg.level, "Confidence level")->capture_default_str();
  cmd->add_option("--resamples", o->cfg.resamples, "Bootstrap resamples")->capture_default_str();
  cmd->add_option("--rer-denominator", o->rer_denominator, "Annotated bot turns or all annotated turns")
      ->check(CLI::IsMember({"bot-turns", "all-turns"}))
      ->capture_default_str();
  cmd->add_option("--depth-turns", o->depth_turns, "Turns entering the depth sequence")
      ->check(CLI::IsMember({"both", "user", "bot"}))
      ->capture_default_str();
  cmd->add_flag("--diversity-include-user", o->cfg.diversity_include_user, "Count user keywords in topical diversity");
  cmd->add_option("--rcov", o->rcov, "Entropy used by R-COV")
      ->check(CLI::IsMember({"bot-entropy", "conversation-entropy"}))
      ->capture_default_str();
  cmd->add_option("--spread-domains", o->spread, "Comma-separated domains for the rating spread");
  cmd->add_option("--frequent-min", o->cfg.frequent_user_min_conversations,
                  "Conversations with a bot that make a user frequent")
      ->capture_default_str();
  return [=] {
    auto cfg = o->cfg;
    cfg.seed = effective_seed(o->seed);
    cfg.rer_denominator = o->rer_denominator == "all-turns" ? metrics::RerDenominator::all_annotated_turns
                                                            : metrics::RerDenominator::annotated_bot_turns;
    cfg.depth_turns = o->depth_turns == "user"  ? topics::TurnSelection::user
                      : o->depth_turns == "bot" ? topics::TurnSelection::bot
                                                : topics::TurnSelection::both;
    cfg.rcov_mode = o->rcov == "conversation-entropy" ? metrics::RcovMode::mean_conversation_entropy
                                                      : metrics::RcovMode::bot_entropy;
    if (!o->spread.empty()) cfg.spread_domains = split_list(o->spread);
    const auto corpus = load_corpus(o->corpus);
    if (corpus.size() == 0) throw UsageError("corpus holds no conversations");
    const auto lexicon = load_lexicon(o->lexicon);
    const auto annotations = load_annotations(o->annotations);
    const auto matrix = metrics::metric_matrix(corpus, annotations, load_classifier(o->classifier, lexicon), lexicon, cfg);
    write_output(o->out, dump(to_json(matrix)));
    if (!o->csv.empty()) {
      std::ostringstream csv;
      metrics::write_csv(csv, matrix);
      write_output(o->csv, csv.str());
    }
    return kExitOk;
  };
}

/// Restrict a matrix to the metrics used for unification, keeping matrix order.
metrics::MetricMatrix unification_view(const metrics::MetricMatrix& m, const std::string& list) {
  std::vector<std::string> wanted = list.empty() ? metrics::default_unification_metrics() : split_list(list);
  const std::set<std::string> wanted_set(wanted.begin(), wanted.end());
  std::vector<std::string> names;
  for (const auto& info : m.metrics) {
    if (wanted_set.contains(info.name)) names.push_back(info.name);
  }
  if (!list.empty() && names.size() != wanted_set.size()) throw UsageError("--metrics names a metric missing from the matrix");
  return m.select(names);
}

unify::CircleSemantics parse_semantics(const std::string& s) {
  return s == "overlap" ? unify::CircleSemantics::interval_overlap : unify::CircleSemantics::point_in_union;
}

Action add_rank(CLI::App& app) {
  auto* cmd = app.add_subcommand("rank", "Unify a metric matrix into a ranking");
  struct Opts {
    std::string matrix, method = "winners-circle", semantics = "point-in-union", weights, undefined = "exclude-metric",
                        metrics, out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--matrix", o->matrix, "Metric matrix JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--method", o->method, "Unification method")
      ->check(CLI::IsMember({"stack-rank", "weighted-stack-rank", "winners-circle", "confidence-bands"}))
      ->capture_default_str();
  cmd->add_option("--semantics", o->semantics, "How a bot qualifies against the benchmark intervals")
      ->check(CLI::IsMember({"point-in-union", "overlap"}))
      ->capture_default_str();
  cmd->add_option("--weights", o->weights, "JSON object of metric weights (weighted-stack-rank)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--undefined", o->undefined, "Stack rank handling of undefined cells")
      ->check(CLI::IsMember({"exclude-metric", "exclude-bot"}))
      ->capture_default_str();
  cmd->add_option("--metrics", o->metrics, "Comma-separated metrics to unify (default: the standard ten)");
  cmd->add_option("--out", o->out, "Ranking JSON");
  return [=] {
    const auto matrix = unification_view(metrics::matrix_from_json(read_json(o->matrix)), o->metrics);
    const auto method = *unify::parse_method(o->method);
    const auto sem = parse_semantics(o->semantics);
    std::string json, markdown;
    if (method == unify::Method::stack_rank || method == unify::Method::weighted_stack_rank) {
      unify::StackRankOptions opt;
      opt.undefined = o->undefined == "exclude-bot" ? unify::UndefinedPolicy::exclude_bot
                                                    : unify::UndefinedPolicy::exclude_metric;
      if (method == unify::Method::weighted_stack_rank) {
        if (o->weights.empty()) throw UsageError("weighted-stack-rank needs --weights");
        try {
          opt.weights = read_json(o->weights).get<std::map<std::string, double>>();
        } catch (const nlohmann::json::exception& e) {
          throw SchemaError(o->weights + ": weights must map metric names to numbers");
        }
      }
      const auto r = unify::stack_rank(matrix, opt);
      json = dump(to_json(r));
      markdown = report::render_stack_ranking(r);
    } else {
      const auto t = method == unify::Method::winners_circle ? unify::winners_circle(matrix, sem)
                                                             : unify::confidence_bands(matrix, sem);
      json = dump(to_json(t, sem));
      markdown = report::render_score_table(t);
    }
    if (!o->out.empty()) write_output(o->out, json);
    std::cout << markdown;
    return kExitOk;
  };
}

Action add_correlate(CLI::App& app) {
  auto* cmd = app.add_subcommand("correlate", "Correlate each metric with rating means across bots");
  auto matrix = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  cmd->add_option("--matrix", *matrix, "Metric matrix JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", *out, "Correlation JSON");
  return [=] {
    const auto r = unify::correlate_with_ratings(metrics::matrix_from_json(read_json(*matrix)));
    if (!out->empty()) write_output(*out, dump(to_json(r)));
    std::cout << report::render_correlation(r);
    return kExitOk;
  };
}

RatingSource parse_source(const std::string& s) { return *parse_rating_source(s); }

nlohmann::ordered_json eval_json(const predictor::PredictorEval& e, double baseline) {
  auto corr = [](const std::optional<stats::CorrelationResult>& c) {
    return c ? nlohmann::ordered_json{{"coefficient", c->coefficient}, {"p_value", c->p_value}}
             : nlohmann::ordered_json(nullptr);
  };
  return {{"n", e.n}, {"rmse", e.rmse}, {"random_baseline_rmse", baseline}, {"pearson", corr(e.pearson)},
          {"spearman", corr(e.spearman)}};
}

void print_eval(const predictor::PredictorEval& e, double baseline) {
  std::cout << "n=" << e.n << " rmse=" << report::fixed(e.rmse, 4) << " random_rmse=" << report::fixed(baseline, 4);
  if (e.pearson) std::cout << " pearson=" << report::fixed(e.pearson->coefficient, 4);
  if (e.spearman) std::cout << " spearman=" << report::fixed(e.spearman->coefficient, 4);
  std::cout << '\n';
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

Action add_train_predictor(CLI::App& app) {
  auto* cmd = app.add_subcommand("train-predictor", "Fit the gradient-boosted rating predictor");
  struct Opts {
    CorpusInput corpus;
    std::string out, source = "user";
    std::optional<std::uint64_t> seed;
    predictor::GbdtConfig cfg;
    predictor::FeatureConfig features;
    double test_fraction = 0.0;
  };
  auto o = std::make_shared<Opts>();
  add_corpus_input(cmd, o->corpus);
  cmd->add_option("--out", o->out, "Model JSON")->required();
  cmd->add_option("--source", o->source, "Rating source used as the target")
      ->check(CLI::IsMember({"user", "engagement_evaluator"}))
      ->capture_default_str();
  cmd->add_option("--seed", o->seed, "Seed for row subsampling and the holdout split");
  cmd->add_option("--trees", o->cfg.trees, "Boosting rounds")->capture_default_str();
  cmd->add_option("--max-depth", o->cfg.max_depth, "Maximum tree depth")->capture_default_str();
  cmd->add_option("--lr", o->cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--min-leaf", o->cfg.min_leaf, "Minimum examples per leaf")->capture_default_str();
  cmd->add_option("--subsample", o->cfg.subsample, "Row fraction per tree")->capture_default_str();
  cmd->add_option("--buckets", o->features.buckets, "Hashed n-gram buckets")->capture_default_str();
  cmd->add_option("--test-fraction", o->test_fraction, "Hold out this fraction and report its scores")
      ->check(CLI::Range(0.0, 1.0));
  return [=] {
    auto cfg = o->cfg;
    cfg.seed = effective_seed(o->seed);
    const auto data = predictor::rated_examples(load_corpus(o->corpus), o->features, parse_source(o->source));
    if (data.ratings.empty()) throw UsageError("corpus has no ratings from source '" + o->source + "'");
    std::vector<std::size_t> train(data.ratings.size()), test;
    std::iota(train.begin(), train.end(), std::size_t{0});
    if (o->test_fraction > 0.0) std::tie(train, test) = predictor::train_test_split(data.ratings.size(), o->test_fraction, cfg.seed);
    const auto xs = take(data.features, train);
    const auto ys = take(data.ratings, train);
    const auto t = predictor::train_gbdt_with_history(xs, ys, cfg, o->features);
    std::cout << "trained on " << xs.size() << " conversation(s); train rmse " << report::fixed(t.train_rmse.front(), 4)
              << " -> " << report::fixed(t.train_rmse.back(), 4) << '\n';
    if (!test.empty()) {
      const auto hy = take(data.ratings, test);
      print_eval(predictor::evaluate(t.model, take(data.features, test), hy), stats::uniform_random_rmse(hy));
    }
    write_output(o->out, to_json(t.model).dump() + "\n");
    return kExitOk;
  };
}

Action add_eval_predictor(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval-predictor", "Score a rating predictor against a corpus");
  struct Opts {
    CorpusInput corpus;
    std::string model, out, source = "user";
    std::optional<std::uint64_t> seed;
    double test_fraction = 0.0;
    bool clamp = false;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--model", o->model, "Model JSON")->required()->check(CLI::ExistingFile);
  add_corpus_input(cmd, o->corpus);
  cmd->add_option("--out", o->out, "Evaluation JSON");
  cmd->add_option("--source", o->source, "Rating source to score against")
      ->check(CLI::IsMember({"user", "engagement_evaluator"}))
      ->capture_default_str();
  cmd->add_option("--test-fraction", o->test_fraction,
                  "Score only the holdout part of the split train-predictor used with the same seed")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", o->seed, "Split seed");
  cmd->add_flag("--clamp", o->clamp, "Clamp predictions to the 1..5 scale");
  return [=] {
    const auto model = predictor::model_from_json(read_json(o->model));
    const auto data = predictor::rated_examples(load_corpus(o->corpus), model.features, parse_source(o->source));
    if (data.ratings.empty()) throw UsageError("corpus has no ratings from source '" + o->source + "'");
    std::vector<std::size_t> rows(data.ratings.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (o->test_fraction > 0.0) {
      rows = predictor::train_test_split(data.ratings.size(), o->test_fraction, effective_seed(o->seed)).second;
    }
    const auto ys = take(data.ratings, rows);
    const auto e = predictor::evaluate(model, take(data.features, rows), ys, o->clamp);
    const double baseline = stats::uniform_random_rmse(ys);
    print_eval(e, baseline);
    if (!o->out.empty()) write_output(o->out, dump(eval_json(e, baseline)));
    return kExitOk;
  };
}

Action add_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic corpus with planted quality");
  struct Opts {
    std::string profiles, lexicon, out, annotations_out, truth_out;
    std::size_t default_bots = 0, n = 100;
    std::optional<std::uint64_t> seed;
  };
  auto o = std::make_shared<Opts>();
  auto* profiles = cmd->add_option("--profiles", o->profiles, "JSON list of bot quality profiles")
                       ->check(CLI::ExistingFile);
  auto* defaults = cmd->add_option("--default-bots", o->default_bots, "Use N built-in profiles of decreasing quality");
  profiles->excludes(defaults);
  cmd->add_option("--lexicon", o->lexicon, "Lexicon JSON (default: built-in)")->check(CLI::ExistingFile);
  cmd->add_option("--n", o->n, "Conversations per bot")->capture_default_str();
  cmd->add_option("--seed", o->seed, "Random seed");
  cmd->add_option("--out", o->out, "Corpus JSONL")->required();
  cmd->add_option("--annotations-out", o->annotations_out, "Coherence annotation JSONL");
  cmd->add_option("--truth-out", o->truth_out, "Planted ground truth JSON");
  return [=] {
    const auto lexicon = load_lexicon(o->lexicon);
    std::vector<synth::BotQualityProfile> ps;
    if (!o->profiles.empty()) {
      ps = synth::profiles_from_json(read_json(o->profiles));
    } else if (o->default_bots > 0) {
      ps = synth::default_profiles(o->default_bots, lexicon);
    } else {
      throw UsageError("synth needs --profiles or --default-bots");
    }
    const auto seed = effective_seed(o->seed);
    const auto g = synth::generate_corpus(ps, o->n, seed, lexicon);
    std::ostringstream corpus;
    write_corpus(corpus, g.corpus);
    write_output(o->out, corpus.str());
    if (!o->annotations_out.empty()) {
      std::ostringstream ann;
      write_annotations(ann, g.annotations);
      write_output(o->annotations_out, ann.str());
    }
    if (!o->truth_out.empty()) write_output(o->truth_out, dump(to_json(g.truth, g.corpus, lexicon.domains())));
    return kExitOk;
  };
}

Action add_report(CLI::App& app) {
  auto* cmd = app.add_subcommand("report", "Render a Markdown summary");
  struct Opts {
    std::string matrix, correlation, methods, semantics = "point-in-union", out;
    std::vector<std::string> score_tables;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--matrix", o->matrix, "Metric matrix JSON")->check(CLI::ExistingFile);
  cmd->add_option("--score-table", o->score_tables, "Score table JSON written by rank (repeatable)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--correlation", o->correlation, "Correlation JSON written by correlate")->check(CLI::ExistingFile);
  cmd->add_option("--methods", o->methods, "Comma-separated unification methods to run on --matrix");
  cmd->add_option("--semantics", o->semantics, "Winners-circle and band qualification")
      ->check(CLI::IsMember({"point-in-union", "overlap"}))
      ->capture_default_str();
  cmd->add_option("--out", o->out, "Markdown output (default stdout)");
  return [=] {
    report::ReportInputs in;
    if (!o->matrix.empty()) in.matrix = metrics::matrix_from_json(read_json(o->matrix));
    for (const auto& path : o->score_tables) in.score_tables.push_back(unify::score_table_from_json(read_json(path)));
    if (!o->correlation.empty()) in.correlation = unify::correlation_from_json(read_json(o->correlation));
    const auto sem = parse_semantics(o->semantics);
    for (const auto& name : split_list(o->methods)) {
      const auto method = unify::parse_method(name);
      if (!method) throw UsageError("unknown method '" + name + "'");
      if (!in.matrix) throw UsageError("--methods needs --matrix");
      const auto view = unification_view(*in.matrix, "");
      switch (*method) {
        case unify::Method::winners_circle: in.score_tables.push_back(unify::winners_circle(view, sem)); break;
        case unify::Method::confidence_bands: in.score_tables.push_back(unify::confidence_bands(view, sem)); break;
        case unify::Method::stack_rank: in.stack_ranking = unify::stack_rank(view); break;
        case unify::Method::weighted_stack_rank: throw UsageError("weighted-stack-rank needs weights; use rank");
      }
    }
    write_output(o->out, report::render_report(in));
    return kExitOk;
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluate and rank conversational agents from transcript corpora", "convoeval"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::map<std::string, Action> actions;
  actions["validate"] = add_validate(app);
  actions["stats"] = add_stats(app);
  actions["train-classifier"] = add_train_classifier(app);
  actions["annotate"] = add_annotate(app);
  actions["metrics"] = add_metrics(app);
  actions["rank"] = add_rank(app);
  actions["correlate"] = add_correlate(app);
  actions["train-predictor"] = add_train_predictor(app);
  actions["eval-predictor"] = add_eval_predictor(app);
  actions["synth"] = add_synth(app);
  actions["report"] = add_report(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return actions.at(app.get_subcommands().front()->get_name())();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
