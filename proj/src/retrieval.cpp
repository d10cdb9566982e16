// SPDX-License-Identifier: Apache-2.0
#include "dkrn/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "dkrn/error.hpp"
#include "dkrn/nn/checkpoint.hpp"
#include "dkrn/nn/inference.hpp"
#include "dkrn/nn/optim.hpp"

namespace dkrn {

RetrievalModel::RetrievalModel(TokenVocabulary tokens, RetrievalConfig config, const EmbeddingTable* pretrained)
    : config_(config),
      tokens_(std::move(tokens)),
      embedding_("retrieval.embedding", {tokens_.size(), config.hidden_dim}),
      hist_("retrieval.history", config.hidden_dim, config.hidden_dim),
      resp_("retrieval.response", config.hidden_dim, config.hidden_dim),
      out_("retrieval.out", 2 * config.hidden_dim, 1) {
  if (config.hidden_dim == 0 || config.window == 0 || config.max_context_tokens == 0 ||
      config.max_response_tokens == 0) {
    throw ConfigError("retrieval dimensions, window and token limits must be positive");
  }
  Rng rng(config.seed);
  init_embedding_matrix(embedding_, tokens_, pretrained, rng);
  if (!(config.init_range > 0)) throw ConfigError("retrieval init_range must be positive");
  hist_.init(rng, config.init_range);
  resp_.init(rng, config.init_range);
  out_.init(rng, config.init_range);
}

std::vector<nn::Parameter*> RetrievalModel::parameters() {
  std::vector<nn::Parameter*> p{&embedding_};
  for (auto* q : hist_.parameters()) p.push_back(q);
  for (auto* q : resp_.parameters()) p.push_back(q);
  for (auto* q : out_.parameters()) p.push_back(q);
  return p;
}

std::vector<std::size_t> RetrievalModel::response_ids(const Utterance& u) const {
  auto ids = tokens_.encode(u.tokens);
  if (ids.size() > config_.max_response_tokens) ids.resize(config_.max_response_tokens);
  return ids;
}

std::vector<double> RetrievalModel::encode_history(std::span<const Utterance> history) const {
  return nn::gru_encode_forward(hist_, embedding_,
                                context_ids(history, tokens_, config_.window, config_.max_context_tokens));
}

std::vector<double> RetrievalModel::encode_response(const Utterance& candidate) const {
  return nn::gru_encode_forward(resp_, embedding_, response_ids(candidate));
}

std::vector<double> RetrievalModel::encode_keyword(const std::optional<std::string>& keyword) const {
  const std::size_t dim = config_.hidden_dim;
  std::vector<double> v(dim, 0.0);
  if (!config_.keyword_enabled || !keyword) return v;
  const auto ids = tokens_.encode(tokenize(*keyword));
  if (ids.empty()) return v;
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (auto id : ids) {
    for (std::size_t d = 0; d < dim; ++d) v[d] += embedding_.value[id * dim + d] * inv;
  }
  return v;
}

double RetrievalModel::score_features(std::span<const double> response, std::span<const double> history,
                                      std::span<const double> keyword) const {
  const std::size_t dim = config_.hidden_dim;
  std::vector<double> features(2 * dim);
  for (std::size_t d = 0; d < dim; ++d) {
    features[d] = response[d] * history[d];
    features[dim + d] = response[d] * keyword[d];
  }
  return nn::sigmoid(nn::dense_forward(out_, features)[0]);
}

double RetrievalModel::score(std::span<const Utterance> history, const std::optional<std::string>& keyword,
                             const Utterance& candidate) const {
  return score_features(encode_response(candidate), encode_history(history), encode_keyword(keyword));
}

EncodedPool RetrievalModel::encode_pool(std::vector<const Utterance*> pool) const {
  EncodedPool out;
  out.features.resize(pool.size());
  const auto n = static_cast<std::ptrdiff_t>(pool.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out.features[static_cast<std::size_t>(i)] = encode_response(*pool[static_cast<std::size_t>(i)]);
  }
  out.utterances = std::move(pool);
  return out;
}

namespace {

RankedCandidates sort_ranked(std::vector<double> probs) {
  RankedCandidates ranked(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) ranked[i] = {i, probs[i]};
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) { return a.probability > b.probability; });
  return ranked;
}

}  // namespace

RankedCandidates RetrievalModel::rank(std::span<const Utterance> history, const std::optional<std::string>& keyword,
                                      const EncodedPool& pool) const {
  const auto h = encode_history(history);
  const auto k = encode_keyword(keyword);
  std::vector<double> probs(pool.features.size());
  const auto n = static_cast<std::ptrdiff_t>(probs.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    probs[idx] = score_features(pool.features[idx], h, k);
  }
  return sort_ranked(std::move(probs));
}

RankedCandidates RetrievalModel::rank_subset(std::span<const Utterance> history,
                                             const std::optional<std::string>& keyword, const EncodedPool& pool,
                                             std::span<const std::size_t> subset) const {
  const auto h = encode_history(history);
  const auto k = encode_keyword(keyword);
  std::vector<double> probs(subset.size());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] >= pool.features.size()) throw Error("rank_subset: index out of range");
    probs[i] = score_features(pool.features[subset[i]], h, k);
  }
  auto ranked = sort_ranked(std::move(probs));
  for (auto& r : ranked) r.index = subset[r.index];
  return ranked;
}

RankedCandidates RetrievalModel::rank_serial(std::span<const Utterance> history,
                                             const std::optional<std::string>& keyword, const EncodedPool& pool) const {
  const auto h = encode_history(history);
  const auto k = encode_keyword(keyword);
  std::vector<double> probs;
  probs.reserve(pool.features.size());
  for (const auto& f : pool.features) probs.push_back(score_features(f, h, k));
  return sort_ranked(std::move(probs));
}

nn::Var RetrievalModel::encode_keyword(nn::Tape& tape, const std::optional<std::string>& keyword) {
  const std::size_t dim = config_.hidden_dim;
  if (!config_.keyword_enabled || !keyword) return tape.constant(std::vector<double>(dim, 0.0));
  const auto ids = tokens_.encode(tokenize(*keyword));
  if (ids.empty()) return tape.constant(std::vector<double>(dim, 0.0));
  std::vector<nn::Var> rows;
  for (auto id : ids) rows.push_back(tape.row(embedding_, id));
  return nn::mean_pool(rows);
}

nn::Var RetrievalModel::example_loss(nn::Tape& tape, std::span<const Utterance> history,
                                     const std::optional<std::string>& keyword, const Utterance& gold,
                                     std::span<const Utterance* const> negatives) {
  const auto hist_cell = nn::bind(tape, hist_);
  const auto resp_cell = nn::bind(tape, resp_);
  const auto out = nn::bind(tape, out_);

  const auto encode = [&](const nn::BoundGru& cell, const std::vector<std::size_t>& ids) {
    std::vector<nn::Var> xs;
    xs.reserve(ids.size());
    for (auto id : ids) xs.push_back(tape.row(embedding_, id));
    return nn::gru_encode(tape, cell, xs);
  };
  const nn::Var h = encode(hist_cell, context_ids(history, tokens_, config_.window, config_.max_context_tokens));
  const nn::Var k = encode_keyword(tape, keyword);

  std::vector<nn::Var> logits;
  std::vector<double> targets;
  const auto add_candidate = [&](const Utterance& u, double label) {
    const nn::Var r = encode(resp_cell, response_ids(u));
    logits.push_back(nn::dense(out, nn::concat(nn::hadamard(r, h), nn::hadamard(r, k))));
    targets.push_back(label);
  };
  add_candidate(gold, 1.0);
  for (const auto* neg : negatives) add_candidate(*neg, 0.0);

  // Stack the scalar logits into one vector for the loss.
  nn::Var z = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) z = nn::concat(z, logits[i]);
  const std::vector<double> weights(targets.size(), 1.0);
  return nn::bce_with_logits(z, targets, weights);
}

void RetrievalModel::save(const std::filesystem::path& path) {
  std::map<std::string, std::string> meta{
      {"tokens", tokens_.serialize()},
      {"hidden_dim", std::to_string(config_.hidden_dim)},
      {"window", std::to_string(config_.window)},
      {"max_context_tokens", std::to_string(config_.max_context_tokens)},
      {"max_response_tokens", std::to_string(config_.max_response_tokens)},
      {"keyword_enabled", config_.keyword_enabled ? "1" : "0"},
      {"init_range", nn::format_double(config_.init_range)},
      {"seed", std::to_string(config_.seed)},
  };
  nn::Checkpoint::capture("retrieval", std::move(meta), parameters()).save(path);
}

RetrievalModel RetrievalModel::load(const std::filesystem::path& path) {
  const auto ck = nn::Checkpoint::load(path);
  if (ck.kind != "retrieval") throw DataError(path.string() + " is a " + ck.kind + " checkpoint, not retrieval");
  RetrievalConfig cfg;
  try {
    cfg.hidden_dim = std::stoul(ck.require_meta("hidden_dim"));
    cfg.window = std::stoul(ck.require_meta("window"));
    cfg.max_context_tokens = std::stoul(ck.require_meta("max_context_tokens"));
    cfg.max_response_tokens = std::stoul(ck.require_meta("max_response_tokens"));
    cfg.keyword_enabled = ck.require_meta("keyword_enabled") == "1";
    cfg.init_range = std::stod(ck.require_meta("init_range"));
    cfg.seed = std::stoull(ck.require_meta("seed"));
  } catch (const std::logic_error&) {
    throw DataError("bad retrieval metadata in " + path.string());
  }
  RetrievalModel model(TokenVocabulary::deserialize(ck.require_meta("tokens")), cfg);
  ck.restore(model.parameters());
  return model;
}

// ---------------------------------------------------------------------------

TrainHistory train_retrieval(RetrievalModel& model, const std::vector<Conversation>& train,
                             const KeywordVocabulary& vocab, const RetrievalTrainConfig& config,
                             const std::function<void(std::size_t, double)>& on_epoch) {
  const auto start = std::chrono::steady_clock::now();
  const auto examples = turn_examples(train, false);
  if (examples.empty()) throw DataError("no training examples for retrieval");
  const auto& base = config.base;
  if (base.batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto pool = utterance_pool(train);

  const auto params = model.parameters();
  nn::Adam adam(params);
  Rng rng(base.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  std::vector<const Utterance*> negatives;
  for (std::size_t epoch = 0; epoch < base.epochs; ++epoch) {
    const double lr = nn::linear_decay_lr(epoch, base.decay_epochs, base.lr, base.lr_final);
    shuffle(order, rng);
    double epoch_loss = 0;
    for (std::size_t b = 0; b < order.size(); b += base.batch_size) {
      const std::size_t e = std::min(order.size(), b + base.batch_size);
      nn::zero_grads(params);
      for (std::size_t i = b; i < e; ++i) {
        const auto& ex = examples[order[i]];
        const auto& gold = ex.response();
        std::optional<std::string> keyword;
        if (!gold.keywords.empty()) {
          auto it = gold.keywords.begin();
          std::advance(it, static_cast<std::ptrdiff_t>(uniform_index(rng, gold.keywords.size())));
          keyword = vocab.word(*it);
        }
        negatives.clear();
        for (auto idx : sample_negatives(gold.text, pool, config.negatives, rng())) negatives.push_back(pool[idx]);
        nn::Tape tape;
        const nn::Var loss = model.example_loss(tape, ex.history(), keyword, gold, negatives);
        epoch_loss += loss.item();
        tape.backward(loss);
      }
      const double inv = 1.0 / static_cast<double>(e - b);
      for (auto* p : params) {
        for (auto& g : p->grad) g *= inv;
      }
      nn::clip_global_norm(params, base.clip_norm);
      adam.step(lr);
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(examples.size()));
    if (on_epoch) on_epoch(epoch, history.train_loss.back());
  }
  history.skipped_steps = adam.skipped();
  history.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return history;
}

namespace {

// Gold rank for one evaluation example; all randomness comes from `seed`.
std::size_t gold_rank(const RetrievalModel& model, const TurnExample& ex, const std::vector<const Utterance*>& pool,
                      std::uint64_t seed, std::size_t negatives, const KeywordFn& keyword_fn) {
  const auto& gold = ex.response();
  const auto neg = sample_negatives(gold.text, pool, negatives, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  const std::size_t gold_pos = uniform_index(rng, negatives + 1);

  const auto keyword = keyword_fn ? keyword_fn(ex) : std::nullopt;
  const auto h = model.encode_history(ex.history());
  const auto k = model.encode_keyword(keyword);
  std::vector<double> scores;
  scores.reserve(negatives + 1);
  std::size_t next_neg = 0;
  for (std::size_t pos = 0; pos <= negatives; ++pos) {
    const Utterance& u = pos == gold_pos ? gold : *pool[neg[next_neg++]];
    scores.push_back(model.score_features(model.encode_response(u), h, k));
  }
  return rank_of(scores, gold_pos);
}

}  // namespace

RetrievalMetrics evaluate_retrieval(const RetrievalModel& model, const std::vector<Conversation>& test,
                                    std::uint64_t seed, std::size_t negatives, const KeywordFn& keyword_fn) {
  const auto examples = turn_examples(test, false);
  const auto pool = utterance_pool(test);
  std::vector<std::size_t> ranks(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    ranks[idx] = gold_rank(model, examples[idx], pool, derive_seed(seed, idx), negatives, keyword_fn);
  }
  return retrieval_metrics(ranks);
}

RetrievalMetrics evaluate_retrieval_serial(const RetrievalModel& model, const std::vector<Conversation>& test,
                                           std::uint64_t seed, std::size_t negatives, const KeywordFn& keyword_fn) {
  const auto examples = turn_examples(test, false);
  const auto pool = utterance_pool(test);
  std::vector<std::size_t> ranks;
  ranks.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    ranks.push_back(gold_rank(model, examples[i], pool, derive_seed(seed, i), negatives, keyword_fn));
  }
  return retrieval_metrics(ranks);
}

}  // namespace dkrn
