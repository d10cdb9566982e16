// SPDX-License-Identifier: Apache-2.0
#include "dkrn/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "dkrn/text_encoder.hpp"

namespace dkrn {

ExperimentConfig ExperimentConfig::desk_scale() {
  ExperimentConfig c;
  c.predictor.embedding_dim = 16;
  c.predictor.hidden_dim = 16;
  c.predictor_train.epochs = 10;
  c.predictor_train.lr = 1e-2;
  c.predictor_train.lr_final = 1e-3;
  c.predictor_train.batch_size = 8;
  // A few hundred conversations give too few updates for the default schedule
  // and small init to leave the Hadamard-matching saddle.
  c.retrieval.hidden_dim = 16;
  c.retrieval.init_range = 0.3;
  c.retrieval_train.base.epochs = 10;
  c.retrieval_train.base.lr = 2e-2;
  c.retrieval_train.base.lr_final = 2e-3;
  c.retrieval_train.base.batch_size = 2;
  return c;
}

AgentResources Experiment::resources(ChooseMode mode) const {
  AgentResources r;
  r.vocab = &vocab;
  r.embeddings = &embeddings;
  r.graph = &graph;
  r.dkrn = &dkrn;
  r.neural = &neural;
  r.pmi = &pmi;
  r.retrieval_keyword = &retrieval_keyword;
  r.retrieval_plain = &retrieval_plain;
  r.bank = &bank;
  r.mode = mode;
  return r;
}

std::vector<Utterance> flatten_utterances(const std::vector<Conversation>& conversations) {
  std::vector<Utterance> out;
  for (const auto& c : conversations) out.insert(out.end(), c.utterances.begin(), c.utterances.end());
  return out;
}

namespace {

std::optional<std::string> top_keyword(std::span<const double> scores, const KeywordVocabulary& vocab) {
  if (scores.empty()) return std::nullopt;
  const auto best = std::max_element(scores.begin(), scores.end());  // first maximum: lowest id
  return vocab.word(static_cast<KeywordId>(best - scores.begin()));
}

}  // namespace

std::string format_turn_level_table(const std::vector<TurnLevelRow>& rows) {
  std::string out = "system\tR_w@1\tR_w@3\tR_w@5\tP@1\tR_20@1\tR_20@3\tR_20@5\tMRR\n";
  char buf[64];
  const auto cell = [&](double v) {
    std::snprintf(buf, sizeof buf, "\t%.4f", v);
    out += buf;
  };
  for (const auto& r : rows) {
    out += r.system;
    if (r.keyword) {
      cell(r.keyword->recall_at_1);
      cell(r.keyword->recall_at_3);
      cell(r.keyword->recall_at_5);
      cell(r.keyword->precision_at_1);
    } else {
      out += "\t-\t-\t-\t-";
    }
    if (r.retrieval) {
      cell(r.retrieval->recall_at_1);
      cell(r.retrieval->recall_at_3);
      cell(r.retrieval->recall_at_5);
      cell(r.retrieval->mrr);
    } else {
      out += "\t-\t-\t-\t-";
    }
    out += '\n';
  }
  return out;
}

KeywordFn predicted_keyword_fn(const PredictorModel& model, const KeywordGraph* graph, const KeywordVocabulary& vocab) {
  return [&model, graph, &vocab](const TurnExample& ex) {
    return top_keyword(model.predict(ex.history(), graph).scores, vocab);
  };
}

KeywordFn pmi_keyword_fn(const PmiTable& table, const KeywordVocabulary& vocab, std::size_t window) {
  return [&table, &vocab, window](const TurnExample& ex) -> std::optional<std::string> {
    const auto ctx = context_keywords(ex.history(), window);
    if (ctx.empty()) return std::nullopt;
    return top_keyword(predict_pmi(ctx, table), vocab);
  };
}

std::unique_ptr<Experiment> run_synthetic_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  const auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  auto ex = std::make_unique<Experiment>();
  ex->synthetic = generate_synthetic_corpus(config.corpus);

  ex->embeddings = EmbeddingTable(config.corpus.embedding_dim);
  for (const auto& [w, v] : ex->synthetic.embeddings) ex->embeddings.add(w, v);

  VocabularyRules rules;
  rules.min_frequency = config.min_keyword_frequency;
  rules.content_lexicon = std::unordered_set<std::string>(ex->synthetic.lexicon.begin(), ex->synthetic.lexicon.end());
  ex->vocab = build_vocabulary(ex->synthetic.conversations, rules);

  auto convs = ex->synthetic.conversations;
  annotate_keywords(convs, ex->vocab);
  ex->split = split_corpus(std::move(convs), config.split, config.split_seed);
  ex->graph = build_graph(ex->split.train, ex->vocab);
  ex->pmi = PmiTable(ex->graph);
  ex->tokens = TokenVocabulary::build(ex->split.train, ex->vocab);
  say("corpus: " + std::to_string(ex->split.train.size()) + " train conversations, " +
      std::to_string(ex->vocab.size()) + " keywords, " + std::to_string(ex->graph.num_edges()) + " edges");

  const EmbeddingTable* pretrained =
      config.predictor.embedding_dim == ex->embeddings.dim() ? &ex->embeddings : nullptr;

  PredictorConfig routed = config.predictor;
  routed.routing_enabled = true;
  ex->dkrn = PredictorModel(ex->tokens, ex->vocab.size(), routed, pretrained);
  ex->dkrn_history = train_predictor(ex->dkrn, ex->split.train, ex->split.validation, &ex->graph,
                                     config.predictor_train);
  say("trained routed predictor");

  PredictorConfig unrouted = config.predictor;
  unrouted.routing_enabled = false;
  ex->neural = PredictorModel(ex->tokens, ex->vocab.size(), unrouted, pretrained);
  if (config.train_neural) {
    ex->neural_history = train_predictor(ex->neural, ex->split.train, ex->split.validation, nullptr,
                                         config.predictor_train);
    say("trained unrouted predictor");
  }

  const EmbeddingTable* retrieval_pretrained =
      config.retrieval.hidden_dim == ex->embeddings.dim() ? &ex->embeddings : nullptr;
  RetrievalConfig with_kw = config.retrieval;
  with_kw.keyword_enabled = true;
  RetrievalConfig without_kw = config.retrieval;
  without_kw.keyword_enabled = false;
  ex->retrieval_keyword = RetrievalModel(ex->tokens, with_kw, retrieval_pretrained);
  ex->retrieval_plain = RetrievalModel(ex->tokens, without_kw, retrieval_pretrained);
  if (config.train_retrieval) {
    ex->retrieval_keyword_history =
        train_retrieval(ex->retrieval_keyword, ex->split.train, ex->vocab, config.retrieval_train);
    say("trained keyword retrieval");
    ex->retrieval_plain_history =
        train_retrieval(ex->retrieval_plain, ex->split.train, ex->vocab, config.retrieval_train);
    say("trained keyword-free retrieval");
  }

  ex->bank = make_candidate_bank(flatten_utterances(ex->split.train), &ex->retrieval_keyword, &ex->retrieval_plain);
  ex->starts = flatten_utterances(ex->split.test);
  return ex;
}

}  // namespace dkrn
