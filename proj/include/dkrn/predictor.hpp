// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "dkrn/corpus.hpp"
#include "dkrn/embeddings.hpp"
#include "dkrn/kgraph.hpp"
#include "dkrn/metrics.hpp"
#include "dkrn/nn/layers.hpp"
#include "dkrn/text_encoder.hpp"

namespace dkrn {

/// One supervised turn: predict from utterances[0, next) of a conversation.
struct TurnExample {
  const Conversation* conversation = nullptr;
  std::size_t next = 0;

  std::span<const Utterance> history() const {
    return {conversation->utterances.data(), next};
  }
  const Utterance& response() const { return conversation->utterances[next]; }
};

/// Every (conversation, t >= 1) pair; with require_keywords, only those whose
/// response carries at least one keyword.
std::vector<TurnExample> turn_examples(const std::vector<Conversation>& conversations, bool require_keywords);

struct PredictorConfig {
  std::size_t embedding_dim = 200;
  std::size_t hidden_dim = 200;
  std::size_t window = 2;
  std::size_t max_context_tokens = 60;
  bool routing_enabled = true;
  std::uint64_t seed = 1;
};

struct TrainConfig {
  std::size_t epochs = 10;
  double lr = 1e-3;
  double lr_final = 1e-4;
  std::size_t decay_epochs = 10;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

struct TrainHistory {
  std::vector<double> train_loss;       // mean per-example loss per epoch
  std::vector<double> validation_loss;  // empty entries skipped when no validation data
  std::size_t skipped_steps = 0;
  double seconds = 0;
};

/// Output of one prediction: logits K, the mask M and P = sigmoid(K - 1 + M).
struct PredictionDistribution {
  std::vector<double> logits;
  std::vector<double> mask;
  std::vector<double> scores;
  KeywordSet context;
};

/// P = sigmoid(K - 1 + M), evaluated as sigmoid(K + (M - 1)) so a PASS entry
/// gives exactly sigmoid(K).
std::vector<double> apply_routing(std::span<const double> logits, std::span<const double> mask);

/// Keyword predictor: GRU context encoder, fc2(relu(fc1(h))) logits and
/// optional graph routing. With routing disabled this is the unmasked
/// Neural baseline.
class PredictorModel {
 public:
  PredictorModel() = default;
  PredictorModel(TokenVocabulary tokens, std::size_t n_keywords, PredictorConfig config,
                 const EmbeddingTable* pretrained = nullptr);

  const PredictorConfig& config() const { return config_; }
  const TokenVocabulary& tokens() const { return tokens_; }
  std::size_t num_keywords() const { return fc2_.out_dim(); }
  bool routing_enabled() const { return config_.routing_enabled; }

  std::vector<nn::Parameter*> parameters();
  nn::Parameter& embedding() { return embedding_; }
  nn::GruCell& gru() { return gru_; }
  nn::Dense& fc1() { return fc1_; }
  nn::Dense& fc2() { return fc2_; }

  /// h_t: final GRU state over the context window.
  std::vector<double> encode_context(std::span<const Utterance> history) const;
  /// K_{t+1} = fc2(relu(fc1(h_t))).
  std::vector<double> predict_raw(std::span<const double> h) const;
  /// Full prediction; the graph is used only when routing is enabled.
  PredictionDistribution predict(std::span<const Utterance> history, const KeywordGraph* graph) const;

  /// Tape versions of the same computation, used for training and grad checks.
  nn::Var encode_context(nn::Tape& tape, std::span<const Utterance> history);
  nn::Var logits(nn::Tape& tape, std::span<const Utterance> history);
  /// Masked multi-label BCE of one example; BLOCK positions carry no loss.
  nn::Var example_loss(nn::Tape& tape, const TurnExample& example, const KeywordGraph* graph);

  void save(const std::filesystem::path& path);
  static PredictorModel load(const std::filesystem::path& path);

 private:
  PredictorConfig config_;
  TokenVocabulary tokens_;
  nn::Parameter embedding_;
  nn::GruCell gru_;
  nn::Dense fc1_;
  nn::Dense fc2_;
};

/// Minibatch Adam on the masked BCE with the linear lr decay and global-norm
/// clipping. `on_epoch` (optional) sees the epoch index and mean train loss.
TrainHistory train_predictor(PredictorModel& model, const std::vector<Conversation>& train,
                             const std::vector<Conversation>& validation, const KeywordGraph* graph,
                             const TrainConfig& config,
                             const std::function<void(std::size_t, double)>& on_epoch = {});

/// Mean masked loss over examples (no parameter updates).
double mean_loss(PredictorModel& model, const std::vector<TurnExample>& examples, const KeywordGraph* graph);

/// Scores every test turn with a non-empty gold keyword set, in parallel,
/// and aggregates R_w@1/3/5 and P@1.
KeywordMetrics evaluate_keywords(const PredictorModel& model, const std::vector<Conversation>& test,
                                 const KeywordGraph* graph);
/// Single-threaded reference of evaluate_keywords.
KeywordMetrics evaluate_keywords_serial(const PredictorModel& model, const std::vector<Conversation>& test,
                                        const KeywordGraph* graph);

// ---------------------------------------------------------------------------
// PMI baseline over the turn-pair counts of the graph.

class PmiTable {
 public:
  PmiTable() = default;
  PmiTable(const KeywordGraph& train_graph, double alpha = 1.0);

  std::size_t size() const { return out_.size(); }
  double alpha() const { return alpha_; }
  /// log p(a,b) / (p(a) p(b)) under add-alpha smoothing of the V x V joint
  /// count table, with both marginals summed from the smoothed joint.
  double score(KeywordId a, KeywordId b) const;

 private:
  std::map<std::pair<KeywordId, KeywordId>, std::uint64_t> counts_;
  std::vector<double> out_, in_;
  double total_ = 0;
  double alpha_ = 1.0;
};

/// score(b | S) = max over a in S of PMI(a, b); an empty S gives zeros.
std::vector<double> predict_pmi(const KeywordSet& context, const PmiTable& table);

/// Scores from predict_pmi evaluated over the test turns.
KeywordMetrics evaluate_pmi(const PmiTable& table, const std::vector<Conversation>& test, std::size_t window);

}  // namespace dkrn
