// SPDX-License-Identifier: Apache-2.0
// dkrn: corpus preparation, training, evaluation, self-play, chat and serving.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dkrn/agent.hpp"
#include "dkrn/config.hpp"
#include "dkrn/corpus.hpp"
#include "dkrn/embeddings.hpp"
#include "dkrn/error.hpp"
#include "dkrn/kgraph.hpp"
#include "dkrn/pipeline.hpp"
#include "dkrn/predictor.hpp"
#include "dkrn/retrieval.hpp"
#include "dkrn/service.hpp"
#include "dkrn/simulator.hpp"

namespace fs = std::filesystem;
using namespace dkrn;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

void progress(const std::string& line) {
  std::fprintf(stderr, "%s\n", line.c_str());
  std::fflush(stderr);
}

// ---------------------------------------------------------------------------
// Option registration. Every option's long name doubles as its config key and
// its DKRN_* environment variable.

class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_, "flat key = value file; keys are the long option names")
        ->envname("DKRN_CONFIG");
    app_->footer("Every --key may also be given as `key = value` in --config or as DKRN_KEY in the environment "
                 "(flags override the environment, which overrides the config file).");
  }

  template <typename T>
  CLI::Option* add(const std::string& key, T& value, const std::string& help) {
    keys_.insert(key);
    return app_->add_option("--" + key, value, help)->envname(env_name(key))->capture_default_str();
  }

  CLI::App* app() const { return app_; }
  const std::set<std::string>& keys() const { return keys_; }

 private:
  CLI::App* app_;
  std::string config_;
  std::set<std::string> keys_;
};

TokenizerConfig tokenizer_config(const std::string& mode) {
  if (mode == "whitespace") return {TokenizerMode::whitespace};
  if (mode == "char-bigram") return {TokenizerMode::char_bigram};
  throw ConfigError("unknown tokenizer '" + mode + "' (whitespace, char-bigram)");
}

ChooseMode choose_mode(const std::string& mode) {
  if (mode == "greedy") return ChooseMode::greedy;
  if (mode == "sample") return ChooseMode::sample;
  throw ConfigError("unknown keyword choice mode '" + mode + "' (greedy, sample)");
}

const fs::path& require_artifact(const std::string& key, const fs::path& path) {
  if (path.empty()) throw ConfigError("--" + key + " is required");
  if (!fs::exists(path)) throw DataError("missing artifact --" + key + ": " + path.string());
  return path;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Shared artifact loading for the evaluation and chat subcommands.

struct ArtifactPaths {
  fs::path train, test, vocab, graph, embeddings, dkrn, neural, retrieval_keyword, retrieval_plain;
  std::string tokenizer = "whitespace";
  double pmi_alpha = 1.0;

  void add(Options& o, bool need_train, bool need_test) {
    if (need_train) o.add("train", train, "training split (JSONL); its utterances form the candidate bank");
    if (need_test) o.add("test", test, "test split (JSONL)");
    o.add("vocab", vocab, "keyword vocabulary (TSV)");
    o.add("graph", graph, "keyword graph (binary)");
    o.add("embeddings", embeddings, "word embeddings (text)");
    o.add("dkrn", dkrn, "routed predictor checkpoint");
    o.add("neural", neural, "unrouted predictor checkpoint");
    o.add("retrieval-keyword", retrieval_keyword, "keyword-augmented retrieval checkpoint");
    o.add("retrieval-plain", retrieval_plain, "keyword-free retrieval checkpoint");
    o.add("tokenizer", tokenizer, "whitespace or char-bigram");
    o.add("pmi-alpha", pmi_alpha, "PMI smoothing constant");
  }
};

struct Artifacts {
  std::vector<Conversation> train, test;
  KeywordVocabulary vocab;
  std::optional<EmbeddingTable> embeddings;
  std::optional<KeywordGraph> graph;
  std::optional<PmiTable> pmi;
  std::optional<PredictorModel> dkrn, neural;
  std::optional<RetrievalModel> retrieval_keyword, retrieval_plain;
  CandidateBank bank;

  AgentResources resources(ChooseMode mode) const {
    AgentResources r;
    r.vocab = &vocab;
    r.embeddings = embeddings ? &*embeddings : nullptr;
    r.graph = graph ? &*graph : nullptr;
    r.pmi = pmi ? &*pmi : nullptr;
    r.dkrn = dkrn ? &*dkrn : nullptr;
    r.neural = neural ? &*neural : nullptr;
    r.retrieval_keyword = retrieval_keyword ? &*retrieval_keyword : nullptr;
    r.retrieval_plain = retrieval_plain ? &*retrieval_plain : nullptr;
    r.bank = &bank;
    r.mode = mode;
    return r;
  }
};

std::unique_ptr<Artifacts> load_artifacts(const ArtifactPaths& p, bool need_embeddings, bool build_bank) {
  auto a = std::make_unique<Artifacts>();
  const auto tok = tokenizer_config(p.tokenizer);
  a->vocab = KeywordVocabulary::load(require_artifact("vocab", p.vocab));
  if (!p.train.empty()) {
    a->train = read_corpus(require_artifact("train", p.train), tok);
    annotate_keywords(a->train, a->vocab);
  }
  if (!p.test.empty()) {
    a->test = read_corpus(require_artifact("test", p.test), tok);
    annotate_keywords(a->test, a->vocab);
  }
  if (need_embeddings || !p.embeddings.empty()) {
    a->embeddings = load_embeddings(require_artifact("embeddings", p.embeddings));
  }
  if (!p.graph.empty()) {
    a->graph = KeywordGraph::load(require_artifact("graph", p.graph));
    if (a->graph->size() != a->vocab.size()) throw DataError("graph size does not match the vocabulary");
    a->pmi = PmiTable(*a->graph, p.pmi_alpha);
  }
  const auto load_predictor = [&](const char* key, const fs::path& path, std::optional<PredictorModel>& slot) {
    if (path.empty()) return;
    slot = PredictorModel::load(require_artifact(key, path));
    if (slot->num_keywords() != a->vocab.size()) throw DataError(std::string("--") + key + " keyword count mismatch");
  };
  load_predictor("dkrn", p.dkrn, a->dkrn);
  load_predictor("neural", p.neural, a->neural);
  if (!p.retrieval_keyword.empty())
    a->retrieval_keyword = RetrievalModel::load(require_artifact("retrieval-keyword", p.retrieval_keyword));
  if (!p.retrieval_plain.empty())
    a->retrieval_plain = RetrievalModel::load(require_artifact("retrieval-plain", p.retrieval_plain));
  if (build_bank) {
    if (a->train.empty()) throw ConfigError("--train is required to build the candidate bank");
    a->bank = make_candidate_bank(flatten_utterances(a->train), a->retrieval_keyword ? &*a->retrieval_keyword : nullptr,
                                  a->retrieval_plain ? &*a->retrieval_plain : nullptr);
  }
  return a;
}

std::vector<AgentVariant> parse_variants(const std::string& spec) {
  if (spec == "all") return all_variants();
  std::vector<AgentVariant> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = parse_variant(item);
    if (!v) throw ConfigError("unknown variant '" + item + "' (dkrn, neural, retrieval-stgy, retrieval, pmi, all)");
    out.push_back(*v);
  }
  if (out.empty()) throw ConfigError("--variant is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenSynthetic {
  SyntheticConfig cfg;
  std::string structure = "chain";
  fs::path out_corpus, out_embeddings, out_lexicon;

  void add(Options& o) {
    o.add("keywords", cfg.n_keywords, "number of planted keywords");
    o.add("conversations", cfg.n_conversations, "number of conversations");
    o.add("structure", structure, "chain or ring");
    o.add("min-utterances", cfg.min_utterances, "shortest conversation");
    o.add("max-utterances", cfg.max_utterances, "longest conversation");
    o.add("fillers", cfg.n_fillers, "filler vocabulary size");
    o.add("min-fillers", cfg.min_fillers_per_utterance, "fewest fillers per utterance");
    o.add("max-fillers", cfg.max_fillers_per_utterance, "most fillers per utterance");
    o.add("embedding-dim", cfg.embedding_dim, "dimension of the emitted embeddings");
    o.add("correlation", cfg.chain_correlation, "closeness of adjacent chain keywords");
    o.add("seed", cfg.seed, "generator seed");
    o.add("out-corpus", out_corpus, "output corpus (JSONL)")->required();
    o.add("out-embeddings", out_embeddings, "output embeddings (text)");
    o.add("out-lexicon", out_lexicon, "output keyword lexicon (one word per line)");
  }

  int run() {
    if (structure == "chain") {
      cfg.structure = ChainStructure::chain;
    } else if (structure == "ring") {
      cfg.structure = ChainStructure::ring;
    } else {
      throw ConfigError("unknown structure '" + structure + "' (chain, ring)");
    }
    const auto syn = generate_synthetic_corpus(cfg);
    write_corpus(out_corpus, syn.conversations);
    if (!out_embeddings.empty()) write_embeddings(out_embeddings, syn.embeddings);
    if (!out_lexicon.empty()) {
      std::string text;
      for (const auto& w : syn.lexicon) text += w + "\n";
      write_text(out_lexicon, text);
    }
    std::printf("wrote %zu conversations, %zu planted keywords, %zu planted edges\n", syn.conversations.size(),
                syn.keywords.size(), syn.planted_edges.size());
    return kOk;
  }
};

struct BuildVocab {
  fs::path corpus, out_vocab, out_train, out_valid, out_test, lexicon, stopwords;
  std::uint64_t min_frequency = 2000;
  std::size_t min_length = 2;
  double train_ratio = 0.9, valid_ratio = 0.05, test_ratio = 0.05;
  std::uint64_t seed = 1;
  std::string tokenizer = "whitespace";

  void add(Options& o) {
    o.add("corpus", corpus, "input corpus (JSONL)")->required();
    o.add("out-vocab", out_vocab, "output keyword vocabulary (TSV)")->required();
    o.add("out-train", out_train, "output training split")->required();
    o.add("out-valid", out_valid, "output validation split")->required();
    o.add("out-test", out_test, "output test split")->required();
    o.add("lexicon", lexicon, "content-word lexicon; omit to accept every token");
    o.add("stopwords", stopwords, "stopword list");
    o.add("min-frequency", min_frequency, "minimum corpus frequency of a keyword");
    o.add("min-length", min_length, "keywords need more code points than this");
    o.add("train-ratio", train_ratio, "training share");
    o.add("valid-ratio", valid_ratio, "validation share");
    o.add("test-ratio", test_ratio, "test share");
    o.add("seed", seed, "split seed");
    o.add("tokenizer", tokenizer, "whitespace or char-bigram");
  }

  int run() {
    auto convs = read_corpus(require_artifact("corpus", corpus), tokenizer_config(tokenizer));
    VocabularyRules rules;
    rules.min_frequency = min_frequency;
    rules.min_length = min_length;
    if (!lexicon.empty()) rules.content_lexicon = load_word_list(require_artifact("lexicon", lexicon));
    if (!stopwords.empty()) rules.stopwords = load_word_list(require_artifact("stopwords", stopwords));
    const auto vocab = build_vocabulary(convs, rules);
    vocab.save(out_vocab);
    const auto split = split_corpus(std::move(convs), {train_ratio, valid_ratio, test_ratio}, seed);
    write_corpus(out_train, split.train);
    write_corpus(out_valid, split.validation);
    write_corpus(out_test, split.test);
    std::printf("keywords %zu; train %zu, valid %zu, test %zu conversations\n", vocab.size(), split.train.size(),
                split.validation.size(), split.test.size());
    return kOk;
  }
};

struct BuildGraph {
  fs::path train, vocab, out_graph, out_edges;
  std::string tokenizer = "whitespace";

  void add(Options& o) {
    o.add("train", train, "training split (JSONL)")->required();
    o.add("vocab", vocab, "keyword vocabulary (TSV)")->required();
    o.add("out-graph", out_graph, "output graph (binary)")->required();
    o.add("out-edges", out_edges, "optional edge list (TSV)");
    o.add("tokenizer", tokenizer, "whitespace or char-bigram");
  }

  int run() {
    const auto v = KeywordVocabulary::load(require_artifact("vocab", vocab));
    auto convs = read_corpus(require_artifact("train", train), tokenizer_config(tokenizer));
    annotate_keywords(convs, v);
    const auto g = build_graph(convs, v);
    g.save(out_graph);
    if (!out_edges.empty()) g.export_edge_list(out_edges);
    std::printf("nodes %zu, edges %zu\n", g.size(), g.num_edges());
    return kOk;
  }
};

void add_train_config(Options& o, TrainConfig& t) {
  o.add("epochs", t.epochs, "training epochs");
  o.add("lr", t.lr, "initial learning rate");
  o.add("lr-final", t.lr_final, "learning rate after decay");
  o.add("decay-epochs", t.decay_epochs, "epochs of linear decay");
  o.add("batch-size", t.batch_size, "minibatch size");
  o.add("clip", t.clip_norm, "global gradient-norm clip");
}

struct TrainPredictor {
  fs::path train, valid, vocab, graph, embeddings, out;
  PredictorConfig cfg;
  TrainConfig tc;
  bool routing = true;
  std::uint64_t seed = 1;
  std::string tokenizer = "whitespace";

  void add(Options& o) {
    o.add("train", train, "training split (JSONL)")->required();
    o.add("valid", valid, "validation split (JSONL)");
    o.add("vocab", vocab, "keyword vocabulary (TSV)")->required();
    o.add("graph", graph, "keyword graph; required with routing");
    o.add("embeddings", embeddings, "pretrained embeddings for initialization");
    o.add("out", out, "output checkpoint")->required();
    o.add("routing", routing, "apply the knowledge-routing mask (false: unrouted Neural baseline)");
    o.add("embedding-dim", cfg.embedding_dim, "token embedding size");
    o.add("hidden-dim", cfg.hidden_dim, "GRU state size");
    o.add("window", cfg.window, "context utterances");
    o.add("max-context", cfg.max_context_tokens, "context token limit");
    add_train_config(o, tc);
    o.add("seed", seed, "initialization and shuffling seed");
    o.add("tokenizer", tokenizer, "whitespace or char-bigram");
  }

  int run() {
    const auto tok = tokenizer_config(tokenizer);
    const auto v = KeywordVocabulary::load(require_artifact("vocab", vocab));
    auto tr = read_corpus(require_artifact("train", train), tok);
    annotate_keywords(tr, v);
    std::vector<Conversation> va;
    if (!valid.empty()) {
      va = read_corpus(require_artifact("valid", valid), tok);
      annotate_keywords(va, v);
    }
    std::optional<KeywordGraph> g;
    if (routing) g = KeywordGraph::load(require_artifact("graph", graph));
    std::optional<EmbeddingTable> emb;
    if (!embeddings.empty()) emb = load_embeddings(require_artifact("embeddings", embeddings));
    cfg.routing_enabled = routing;
    cfg.seed = seed;
    tc.seed = seed;
    PredictorModel model(TokenVocabulary::build(tr, v), v.size(), cfg, emb ? &*emb : nullptr);
    const auto hist = train_predictor(model, tr, va, g ? &*g : nullptr, tc, [](std::size_t e, double loss) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %zu train_loss %.6f", e + 1, loss);
      progress(buf);
    });
    model.save(out);
    std::printf("final train_loss %.6f", hist.train_loss.empty() ? 0.0 : hist.train_loss.back());
    if (!hist.validation_loss.empty()) std::printf(" validation_loss %.6f", hist.validation_loss.back());
    std::printf(" skipped_steps %zu\n", hist.skipped_steps);
    return kOk;
  }
};

struct TrainRetrieval {
  fs::path train, vocab, embeddings, out;
  RetrievalConfig cfg;
  RetrievalTrainConfig tc;
  std::uint64_t seed = 1;
  std::string tokenizer = "whitespace";

  void add(Options& o) {
    o.add("train", train, "training split (JSONL)")->required();
    o.add("vocab", vocab, "keyword vocabulary (TSV)")->required();
    o.add("embeddings", embeddings, "pretrained embeddings for initialization");
    o.add("out", out, "output checkpoint")->required();
    o.add("keyword", cfg.keyword_enabled, "condition on the keyword (false: keyword-free Retrieval)");
    o.add("hidden-dim", cfg.hidden_dim, "GRU state and embedding size");
    o.add("window", cfg.window, "context utterances");
    o.add("max-context", cfg.max_context_tokens, "context token limit");
    o.add("max-response", cfg.max_response_tokens, "response token limit");
    o.add("init-range", cfg.init_range, "uniform initialization range");
    o.add("negatives", tc.negatives, "negatives per training example");
    add_train_config(o, tc.base);
    o.add("seed", seed, "initialization, sampling and shuffling seed");
    o.add("tokenizer", tokenizer, "whitespace or char-bigram");
  }

  int run() {
    const auto v = KeywordVocabulary::load(require_artifact("vocab", vocab));
    auto tr = read_corpus(require_artifact("train", train), tokenizer_config(tokenizer));
    annotate_keywords(tr, v);
    std::optional<EmbeddingTable> emb;
    if (!embeddings.empty()) emb = load_embeddings(require_artifact("embeddings", embeddings));
    cfg.seed = seed;
    tc.base.seed = seed;
    RetrievalModel model(TokenVocabulary::build(tr, v), cfg, emb ? &*emb : nullptr);
    const auto hist = train_retrieval(model, tr, v, tc, [](std::size_t e, double loss) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "epoch %zu train_loss %.6f", e + 1, loss);
      progress(buf);
    });
    model.save(out);
    std::printf("final train_loss %.6f skipped_steps %zu\n", hist.train_loss.empty() ? 0.0 : hist.train_loss.back(),
                hist.skipped_steps);
    return kOk;
  }
};

struct EvalTurn {
  ArtifactPaths paths;
  std::size_t negatives = 19;
  std::size_t window = 2;
  std::uint64_t seed = 1;
  fs::path out;

  void add(Options& o) {
    paths.add(o, false, true);
    o.add("negatives", negatives, "negatives per test turn");
    o.add("window", window, "context window for PMI keywords");
    o.add("seed", seed, "negative sampling seed");
    o.add("out", out, "also write the table here");
  }

  int run() {
    require_artifact("test", paths.test);
    const auto a = load_artifacts(paths, false, false);
    std::vector<TurnLevelRow> rows;
    if (a->retrieval_plain) {
      rows.push_back({"retrieval", std::nullopt, evaluate_retrieval(*a->retrieval_plain, a->test, seed, negatives)});
    }
    const auto keyword_row = [&](const std::string& name, KeywordMetrics km, const KeywordFn& fn) {
      TurnLevelRow row{name, km, std::nullopt};
      if (a->retrieval_keyword) row.retrieval = evaluate_retrieval(*a->retrieval_keyword, a->test, seed, negatives, fn);
      rows.push_back(row);
    };
    if (a->pmi) keyword_row("pmi", evaluate_pmi(*a->pmi, a->test, window), pmi_keyword_fn(*a->pmi, a->vocab, window));
    if (a->neural) {
      keyword_row("neural", evaluate_keywords(*a->neural, a->test, nullptr),
                  predicted_keyword_fn(*a->neural, nullptr, a->vocab));
    }
    if (a->dkrn) {
      if (a->dkrn->routing_enabled() && !a->graph) throw ConfigError("--graph is required to evaluate --dkrn");
      keyword_row("dkrn", evaluate_keywords(*a->dkrn, a->test, a->graph ? &*a->graph : nullptr),
                  predicted_keyword_fn(*a->dkrn, a->graph ? &*a->graph : nullptr, a->vocab));
    }
    if (rows.empty()) throw ConfigError("nothing to evaluate: give at least one model or --graph");
    const auto table = format_turn_level_table(rows);
    std::printf("%s", table.c_str());
    if (!out.empty()) write_text(out, table);
    return kOk;
  }
};

struct SelfPlay {
  ArtifactPaths paths;
  std::string variant = "dkrn";
  std::size_t episodes = 500;
  SelfPlayConfig cfg;
  std::string mode = "greedy";
  std::uint64_t seed = 1;
  fs::path out, transcripts;

  void add(Options& o) {
    paths.add(o, true, true);
    o.add("variant", variant, "dkrn, neural, retrieval-stgy, retrieval, pmi, a comma list, or all");
    o.add("episodes", episodes, "episodes per variant");
    o.add("max-turns", cfg.max_turns, "turn budget per episode");
    o.add("pool-size", cfg.pool_size, "candidate responses per side");
    o.add("no-repeat", cfg.user_no_repeat, "simulated user never repeats an utterance");
    o.add("all-targets", cfg.sample_all_targets, "also sample targets without inbound graph edges");
    o.add("achieve-threshold", cfg.achieve_threshold, "closeness that counts as reaching the target");
    o.add("mode", mode, "greedy or sample keyword choice");
    o.add("seed", seed, "batch seed");
    o.add("out", out, "batch report file");
    o.add("transcripts", transcripts, "per-episode transcripts (JSONL)");
  }

  int run() {
    require_artifact("train", paths.train);
    require_artifact("test", paths.test);
    const auto variants = parse_variants(variant);
    const auto a = load_artifacts(paths, true, true);
    cfg.mode = choose_mode(mode);
    const auto res = a->resources(cfg.mode);
    std::vector<Utterance> starts = flatten_utterances(a->test);
    std::vector<BatchReport> reports;
    std::string report_text, transcript_text;
    for (auto v : variants) {
      cfg.variant = v;
      reports.push_back(run_batch(res, cfg, starts, episodes, seed));
      report_text += format_batch_report(reports.back());
      for (const auto& e : reports.back().episodes) {
        auto j = transcript_json(e.transcript, a->vocab);
        j["variant"] = std::string(to_string(v));
        j["episode"] = e.episode;
        j["seed"] = e.seed;
        transcript_text += j.dump() + "\n";
      }
      progress("finished " + std::string(to_string(v)));
    }
    const auto table = format_selfplay_table(reports);
    report_text += "# table\n" + table;
    std::printf("%s", table.c_str());
    if (!out.empty()) write_text(out, report_text);
    if (!transcripts.empty()) write_text(transcripts, transcript_text);
    return kOk;
  }
};

struct ServiceOptions {
  ArtifactPaths paths;
  ServiceConfig svc;
  std::string tokenizer_for_service;
  std::string mode = "greedy";

  void add(Options& o) {
    paths.add(o, true, true);
    o.add("max-turns", svc.max_turns, "turn budget per session");
    o.add("pool-size", svc.pool_size, "candidate responses per session");
    o.add("achieve-threshold", svc.achieve_threshold, "closeness that counts as reaching the target");
    o.add("mode", mode, "greedy or sample keyword choice");
    o.add("seed", svc.seed, "session seed base");
  }

  std::unique_ptr<Artifacts> load() {
    require_artifact("train", paths.train);
    require_artifact("test", paths.test);
    svc.tokenizer = tokenizer_config(paths.tokenizer);
    return load_artifacts(paths, true, true);
  }
};

void print_diagnostics(const nlohmann::json& d) {
  if (d.is_null()) return;
  std::printf("  [turn %d] keyword=%s closeness=%s threshold %.3f -> %.3f valid=%d rank=%d%s%s\n",
              d.value("turn", 0),
              d["predicted_keyword"].is_null() ? "-" : d["predicted_keyword"].get<std::string>().c_str(),
              d["predicted_closeness"].is_null() ? "-" : std::to_string(d["predicted_closeness"].get<double>()).c_str(),
              d.value("threshold_before", 0.0), d.value("threshold_after", 0.0), d.value("valid_size", 0),
              d.value("response_rank", 0),
              d.value("keyword_fallback", std::string("none")) != "none"
                  ? (" fallback=" + d["keyword_fallback"].get<std::string>()).c_str()
                  : "",
              d.value("response_relaxed", false) ? " relaxed" : "");
}

struct Chat {
  ServiceOptions so;
  std::string variant = "dkrn";
  std::string target;
  bool show_target = false;

  void add(Options& o) {
    so.add(o);
    o.add("variant", variant, "agent variant");
    o.add("target", target, "target keyword; sampled when empty");
    o.add("show-target", show_target, "print the target before the conversation starts");
  }

  int run() {
    const auto a = so.load();
    DialogueService service(a->resources(choose_mode(so.mode)), flatten_utterances(a->test), so.svc);
    nlohmann::json req{{"variant", variant}};
    if (!target.empty()) req["target"] = target;
    auto created = service.create_session(req);
    if (created.status != 201) throw ConfigError(created.body.value("error", std::string("cannot start session")));
    const auto id = created.body["session_id"].get<std::string>();
    if (show_target) std::printf("target: %s\n", service.get_session(id).body.value("target", target).c_str());
    std::printf("agent: %s\n", created.body["opening_utterance"]["text"].get<std::string>().c_str());
    std::string status = created.body["status"];
    std::string line;
    while (status == "ongoing") {
      std::printf("you> ");
      std::fflush(stdout);
      if (!std::getline(std::cin, line) || line == "/quit") break;
      auto r = service.post_message(id, {{"text", line}});
      if (r.status != 200) {
        std::printf("error: %s\n", r.body.value("error", std::string("?")).c_str());
        continue;
      }
      if (!r.body["agent_utterance"].is_null()) {
        std::printf("agent: %s\n", r.body["agent_utterance"]["text"].get<std::string>().c_str());
        print_diagnostics(r.body["diagnostics"]);
      }
      status = r.body["status"];
      if (status != "ongoing") {
        std::printf("conversation %s after %d turns; target was '%s'\n", status.c_str(), r.body.value("turn", 0),
                    r.body.value("target", std::string("?")).c_str());
      }
    }
    return kOk;
  }
};

struct Serve {
  ServiceOptions so;

  void add(Options& o) {
    so.add(o);
    o.add("host", so.svc.host, "bind address");
    o.add("port", so.svc.port, "TCP port");
    o.add("static-dir", so.svc.static_dir, "built web UI to serve at /");
    o.add("event-log", so.svc.event_log, "append-only JSONL event log");
  }

  int run() {
    const auto a = so.load();
    DialogueService service(a->resources(choose_mode(so.mode)), flatten_utterances(a->test), so.svc);
    progress("listening on " + so.svc.host + ":" + std::to_string(so.svc.port));
    if (!service.listen()) throw Error("could not listen on " + so.svc.host + ":" + std::to_string(so.svc.port));
    return kOk;
  }
};

// Inserts config-file values for keys not given as flags or environment
// variables, directly after the subcommand name.
std::vector<std::string> merge_config(const std::vector<std::string>& args, const Options& opts) {
  std::string config_path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const auto key = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(key);
    if (key == "config") config_path = eq != std::string::npos ? a.substr(eq + 1) : (i + 1 < args.size() ? args[i + 1] : "");
  }
  if (config_path.empty()) {
    if (const char* env = std::getenv("DKRN_CONFIG")) config_path = env;
  }
  if (config_path.empty()) return args;
  const auto entries = read_flat_config(config_path);
  std::vector<std::string> unknown;
  for (const auto& [k, v] : entries) {
    if (!opts.keys().contains(k)) unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys for '" + opts.app()->get_name() + "':";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  std::vector<std::string> out(args.begin(), args.begin() + 1);
  for (const auto& [k, v] : entries) {
    if (given.contains(k) || std::getenv(env_name(k).c_str())) continue;
    out.push_back("--" + k);
    out.push_back(v);
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Target-guided dialogue with dynamic knowledge routing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dkrn 0.1.0");

  GenSynthetic gen;
  BuildVocab vocab;
  BuildGraph graph;
  TrainPredictor tpred;
  TrainRetrieval tret;
  EvalTurn eval;
  SelfPlay self;
  Chat chat;
  Serve serve;

  std::vector<std::pair<Options, std::function<int()>>> commands;
  commands.reserve(9);
  const auto reg = [&](const char* name, const char* help, auto& cmd) {
    commands.emplace_back(Options(app.add_subcommand(name, help)), [&cmd] { return cmd.run(); });
    cmd.add(commands.back().first);
  };
  reg("gen-synthetic", "generate a planted-graph corpus with embeddings", gen);
  reg("build-vocab", "extract the keyword vocabulary and split the corpus", vocab);
  reg("build-graph", "build the keyword transition graph from the training split", graph);
  reg("train-predictor", "train a keyword predictor (routed or unrouted)", tpred);
  reg("train-retrieval", "train a response retrieval model", tret);
  reg("eval-turn", "turn-level keyword and retrieval metrics", eval);
  reg("selfplay", "self-play evaluation against the simulated user", self);
  reg("chat", "converse with an agent in the terminal", chat);
  reg("serve", "run the HTTP session API", serve);

  try {
    std::vector<std::string> args(argv, argv + argc);
    if (args.size() >= 2) {
      for (auto& [opts, run] : commands) {
        if (opts.app()->get_name() == args[1]) {
          std::vector<std::string> tail(args.begin() + 1, args.end());
          tail = merge_config(tail, opts);
          args.resize(1);
          args.insert(args.end(), tail.begin(), tail.end());
        }
      }
    }
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
      app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return kUsage;
    }
    for (auto& [opts, run] : commands) {
      if (opts.app()->parsed()) return run();
    }
    return kUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternal;
  }
}
