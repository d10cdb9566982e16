// SPDX-License-Identifier: Apache-2.0
#include "dkrn/predictor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "dkrn/error.hpp"
#include "dkrn/nn/checkpoint.hpp"
#include "dkrn/nn/inference.hpp"
#include "dkrn/nn/optim.hpp"

namespace dkrn {

std::vector<TurnExample> turn_examples(const std::vector<Conversation>& conversations, bool require_keywords) {
  std::vector<TurnExample> out;
  for (const auto& c : conversations) {
    for (std::size_t t = 1; t < c.utterances.size(); ++t) {
      if (require_keywords && c.utterances[t].keywords.empty()) continue;
      out.push_back({&c, t});
    }
  }
  return out;
}

std::vector<double> apply_routing(std::span<const double> logits, std::span<const double> mask) {
  if (logits.size() != mask.size()) {
    throw ShapeError("apply_routing: " + std::to_string(logits.size()) + " logits but mask of " +
                     std::to_string(mask.size()));
  }
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = nn::sigmoid(logits[i] + (mask[i] - 1.0));
  return p;
}

// ---------------------------------------------------------------------------

PredictorModel::PredictorModel(TokenVocabulary tokens, std::size_t n_keywords, PredictorConfig config,
                               const EmbeddingTable* pretrained)
    : config_(config),
      tokens_(std::move(tokens)),
      embedding_("predictor.embedding", {tokens_.size(), config.embedding_dim}),
      gru_("predictor.gru", config.embedding_dim, config.hidden_dim),
      fc1_("predictor.fc1", config.hidden_dim, config.hidden_dim),
      fc2_("predictor.fc2", config.hidden_dim, n_keywords) {
  if (n_keywords == 0) throw ConfigError("predictor needs a non-empty keyword vocabulary");
  if (config.embedding_dim == 0 || config.hidden_dim == 0 || config.window == 0 || config.max_context_tokens == 0) {
    throw ConfigError("predictor dimensions, window and max_context_tokens must be positive");
  }
  Rng rng(config.seed);
  init_embedding_matrix(embedding_, tokens_, pretrained, rng);
  gru_.init(rng);
  fc1_.init(rng);
  fc2_.init(rng);
}

std::vector<nn::Parameter*> PredictorModel::parameters() {
  std::vector<nn::Parameter*> p{&embedding_};
  for (auto* q : gru_.parameters()) p.push_back(q);
  for (auto* q : fc1_.parameters()) p.push_back(q);
  for (auto* q : fc2_.parameters()) p.push_back(q);
  return p;
}

std::vector<double> PredictorModel::encode_context(std::span<const Utterance> history) const {
  if (history.empty()) throw Error("encode_context: empty history");
  const auto ids = context_ids(history, tokens_, config_.window, config_.max_context_tokens);
  return nn::gru_encode_forward(gru_, embedding_, ids);
}

std::vector<double> PredictorModel::predict_raw(std::span<const double> h) const {
  auto a = nn::dense_forward(fc1_, h);
  for (auto& x : a) x = x > 0 ? x : 0.0;
  return nn::dense_forward(fc2_, a);
}

PredictionDistribution PredictorModel::predict(std::span<const Utterance> history, const KeywordGraph* graph) const {
  PredictionDistribution out;
  out.logits = predict_raw(encode_context(history));
  out.context = context_keywords(history, config_.window);
  if (config_.routing_enabled && graph) {
    if (graph->size() != num_keywords()) throw ConfigError("graph size does not match predictor keyword count");
    out.mask = compute_mask(out.context, *graph);
  } else {
    out.mask.assign(num_keywords(), kMaskPass);
  }
  out.scores = apply_routing(out.logits, out.mask);
  return out;
}

nn::Var PredictorModel::encode_context(nn::Tape& tape, std::span<const Utterance> history) {
  if (history.empty()) throw Error("encode_context: empty history");
  const auto ids = context_ids(history, tokens_, config_.window, config_.max_context_tokens);
  const auto cell = nn::bind(tape, gru_);
  std::vector<nn::Var> xs;
  xs.reserve(ids.size());
  for (auto id : ids) xs.push_back(tape.row(embedding_, id));
  return nn::gru_encode(tape, cell, xs);
}

nn::Var PredictorModel::logits(nn::Tape& tape, std::span<const Utterance> history) {
  const nn::Var h = encode_context(tape, history);
  const auto l1 = nn::bind(tape, fc1_);
  const auto l2 = nn::bind(tape, fc2_);
  return nn::dense(l2, nn::relu(nn::dense(l1, h)));
}

nn::Var PredictorModel::example_loss(nn::Tape& tape, const TurnExample& example, const KeywordGraph* graph) {
  const auto history = example.history();
  const std::size_t n = num_keywords();
  std::vector<double> shift(n, 0.0);
  std::vector<double> weights(n, 1.0);
  if (config_.routing_enabled && graph) {
    const auto mask = compute_mask(context_keywords(history, config_.window), *graph);
    for (std::size_t i = 0; i < n; ++i) {
      shift[i] = mask[i] - 1.0;
      if (mask[i] != kMaskPass) weights[i] = 0.0;
    }
  }
  std::vector<double> targets(n, 0.0);
  for (KeywordId k : example.response().keywords) targets.at(k) = 1.0;
  const nn::Var z = nn::add(logits(tape, history), tape.constant(std::move(shift)));
  return nn::bce_with_logits(z, targets, weights);
}

void PredictorModel::save(const std::filesystem::path& path) {
  std::map<std::string, std::string> meta{
      {"tokens", tokens_.serialize()},
      {"embedding_dim", std::to_string(config_.embedding_dim)},
      {"hidden_dim", std::to_string(config_.hidden_dim)},
      {"window", std::to_string(config_.window)},
      {"max_context_tokens", std::to_string(config_.max_context_tokens)},
      {"routing_enabled", config_.routing_enabled ? "1" : "0"},
      {"n_keywords", std::to_string(num_keywords())},
      {"seed", std::to_string(config_.seed)},
  };
  nn::Checkpoint::capture("predictor", std::move(meta), parameters()).save(path);
}

PredictorModel PredictorModel::load(const std::filesystem::path& path) {
  const auto ck = nn::Checkpoint::load(path);
  if (ck.kind != "predictor") throw DataError(path.string() + " is a " + ck.kind + " checkpoint, not predictor");
  PredictorConfig cfg;
  try {
    cfg.embedding_dim = std::stoul(ck.require_meta("embedding_dim"));
    cfg.hidden_dim = std::stoul(ck.require_meta("hidden_dim"));
    cfg.window = std::stoul(ck.require_meta("window"));
    cfg.max_context_tokens = std::stoul(ck.require_meta("max_context_tokens"));
    cfg.routing_enabled = ck.require_meta("routing_enabled") == "1";
    cfg.seed = std::stoull(ck.require_meta("seed"));
  } catch (const std::logic_error&) {
    throw DataError("bad predictor metadata in " + path.string());
  }
  const auto n_keywords = std::stoul(ck.require_meta("n_keywords"));
  PredictorModel model(TokenVocabulary::deserialize(ck.require_meta("tokens")), n_keywords, cfg);
  ck.restore(model.parameters());
  return model;
}

// ---------------------------------------------------------------------------

double mean_loss(PredictorModel& model, const std::vector<TurnExample>& examples, const KeywordGraph* graph) {
  if (examples.empty()) return 0.0;
  double total = 0;
  for (const auto& ex : examples) {
    nn::Tape tape;
    total += model.example_loss(tape, ex, graph).item();
  }
  return total / static_cast<double>(examples.size());
}

TrainHistory train_predictor(PredictorModel& model, const std::vector<Conversation>& train,
                             const std::vector<Conversation>& validation, const KeywordGraph* graph,
                             const TrainConfig& config, const std::function<void(std::size_t, double)>& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  const auto examples = turn_examples(train, true);
  if (examples.empty()) throw DataError("no training examples: no train turn has a keyword-bearing response");
  if (model.routing_enabled() && !graph) throw ConfigError("routing-enabled predictor needs a keyword graph");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto valid_examples = turn_examples(validation, true);

  const auto params = model.parameters();
  nn::Adam adam(params);
  Rng rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = nn::linear_decay_lr(epoch, config.decay_epochs, config.lr, config.lr_final);
    shuffle(order, rng);
    double epoch_loss = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      nn::zero_grads(params);
      for (std::size_t i = b; i < e; ++i) {
        nn::Tape tape;
        const nn::Var loss = model.example_loss(tape, examples[order[i]], graph);
        epoch_loss += loss.item();
        tape.backward(loss);
      }
      const double inv = 1.0 / static_cast<double>(e - b);
      for (auto* p : params) {
        for (auto& g : p->grad) g *= inv;
      }
      nn::clip_global_norm(params, config.clip_norm);
      adam.step(lr);
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(examples.size()));
    if (!valid_examples.empty()) history.validation_loss.push_back(mean_loss(model, valid_examples, graph));
    if (on_epoch) on_epoch(epoch, history.train_loss.back());
  }
  history.skipped_steps = adam.skipped();
  history.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return history;
}

namespace {

std::vector<KeywordSet> gold_sets(const std::vector<TurnExample>& examples) {
  std::vector<KeywordSet> gold;
  gold.reserve(examples.size());
  for (const auto& ex : examples) gold.push_back(ex.response().keywords);
  return gold;
}

}  // namespace

KeywordMetrics evaluate_keywords(const PredictorModel& model, const std::vector<Conversation>& test,
                                 const KeywordGraph* graph) {
  const auto examples = turn_examples(test, true);
  std::vector<std::vector<double>> scores(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    scores[static_cast<std::size_t>(i)] = model.predict(examples[static_cast<std::size_t>(i)].history(), graph).scores;
  }
  return keyword_metrics(scores, gold_sets(examples));
}

KeywordMetrics evaluate_keywords_serial(const PredictorModel& model, const std::vector<Conversation>& test,
                                        const KeywordGraph* graph) {
  const auto examples = turn_examples(test, true);
  std::vector<std::vector<double>> scores;
  scores.reserve(examples.size());
  for (const auto& ex : examples) scores.push_back(model.predict(ex.history(), graph).scores);
  return keyword_metrics(scores, gold_sets(examples));
}

// ---------------------------------------------------------------------------

PmiTable::PmiTable(const KeywordGraph& train_graph, double alpha)
    : counts_(train_graph.edge_counts()), out_(train_graph.size(), 0.0), in_(train_graph.size(), 0.0), alpha_(alpha) {
  if (!(alpha > 0)) throw ConfigError("PMI smoothing alpha must be positive");
  for (const auto& [edge, c] : counts_) {
    out_[edge.first] += static_cast<double>(c);
    in_[edge.second] += static_cast<double>(c);
    total_ += static_cast<double>(c);
  }
}

double PmiTable::score(KeywordId a, KeywordId b) const {
  auto it = counts_.find({a, b});
  const double c = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
  // Add-alpha smoothing of the joint table; marginals are its row/column sums.
  const double v = static_cast<double>(out_.size());
  const double n = total_ + alpha_ * v * v;
  return std::log((c + alpha_) * n / ((out_.at(a) + alpha_ * v) * (in_.at(b) + alpha_ * v)));
}

std::vector<double> predict_pmi(const KeywordSet& context, const PmiTable& table) {
  std::vector<double> scores(table.size(), 0.0);
  if (context.empty()) return scores;
  for (std::size_t b = 0; b < scores.size(); ++b) {
    double best = -std::numeric_limits<double>::infinity();
    for (KeywordId a : context) best = std::max(best, table.score(a, static_cast<KeywordId>(b)));
    scores[b] = best;
  }
  return scores;
}

KeywordMetrics evaluate_pmi(const PmiTable& table, const std::vector<Conversation>& test, std::size_t window) {
  const auto examples = turn_examples(test, true);
  std::vector<std::vector<double>> scores;
  scores.reserve(examples.size());
  for (const auto& ex : examples) scores.push_back(predict_pmi(context_keywords(ex.history(), window), table));
  return keyword_metrics(scores, gold_sets(examples));
}

}  // namespace dkrn
