// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dkrn/corpus.hpp"
#include "dkrn/embeddings.hpp"
#include "dkrn/metrics.hpp"
#include "dkrn/nn/layers.hpp"
#include "dkrn/predictor.hpp"
#include "dkrn/text_encoder.hpp"

namespace dkrn {

struct RetrievalConfig {
  std::size_t hidden_dim = 200;  // also the embedding dim
  std::size_t window = 2;
  std::size_t max_context_tokens = 60;
  std::size_t max_response_tokens = 30;
  bool keyword_enabled = true;
  double init_range = 0.08;  // uniform(-r, r) for non-pretrained weights
  std::uint64_t seed = 1;
};

struct RankedCandidate {
  std::size_t index = 0;  // position in the scored pool
  double probability = 0;
};

/// Descending by probability, ties by ascending pool index.
using RankedCandidates = std::vector<RankedCandidate>;

/// Pre-computed response encodings for a fixed candidate pool.
struct EncodedPool {
  std::vector<const Utterance*> utterances;
  std::vector<std::vector<double>> features;
};

/// Hadamard-matching response scorer:
///   v1 = enc_resp(c) * enc_hist(h),  v2 = enc_resp(c) * enc_kw(k)
///   p  = sigmoid(dense([v1; v2]))
/// The keyword encoder is the mean embedding of the keyword's tokens; with
/// keyword_enabled false (or no keyword) its output is the zero vector.
class RetrievalModel {
 public:
  RetrievalModel() = default;
  RetrievalModel(TokenVocabulary tokens, RetrievalConfig config, const EmbeddingTable* pretrained = nullptr);

  const RetrievalConfig& config() const { return config_; }
  const TokenVocabulary& tokens() const { return tokens_; }
  bool keyword_enabled() const { return config_.keyword_enabled; }

  std::vector<nn::Parameter*> parameters();
  nn::GruCell& history_encoder() { return hist_; }
  nn::GruCell& response_encoder() { return resp_; }
  nn::Dense& output() { return out_; }
  nn::Parameter& embedding() { return embedding_; }

  std::vector<double> encode_history(std::span<const Utterance> history) const;
  std::vector<double> encode_response(const Utterance& candidate) const;
  std::vector<double> encode_keyword(const std::optional<std::string>& keyword) const;
  double score_features(std::span<const double> response, std::span<const double> history,
                        std::span<const double> keyword) const;

  double score(std::span<const Utterance> history, const std::optional<std::string>& keyword,
               const Utterance& candidate) const;

  EncodedPool encode_pool(std::vector<const Utterance*> pool) const;
  RankedCandidates rank(std::span<const Utterance> history, const std::optional<std::string>& keyword,
                        const EncodedPool& pool) const;
  /// Ranks only the pool positions in `subset`; returned indices are pool
  /// positions, ties broken by subset order.
  RankedCandidates rank_subset(std::span<const Utterance> history, const std::optional<std::string>& keyword,
                               const EncodedPool& pool, std::span<const std::size_t> subset) const;
  /// Single-threaded reference of rank().
  RankedCandidates rank_serial(std::span<const Utterance> history, const std::optional<std::string>& keyword,
                               const EncodedPool& pool) const;

  /// BCE over one gold (label 1) and its negatives (label 0).
  nn::Var example_loss(nn::Tape& tape, std::span<const Utterance> history, const std::optional<std::string>& keyword,
                       const Utterance& gold, std::span<const Utterance* const> negatives);

  void save(const std::filesystem::path& path);
  static RetrievalModel load(const std::filesystem::path& path);

 private:
  std::vector<std::size_t> response_ids(const Utterance& u) const;
  nn::Var encode_keyword(nn::Tape& tape, const std::optional<std::string>& keyword);

  RetrievalConfig config_;
  TokenVocabulary tokens_;
  nn::Parameter embedding_;
  nn::GruCell hist_;
  nn::GruCell resp_;
  nn::Dense out_;
};

struct RetrievalTrainConfig {
  TrainConfig base;
  std::size_t negatives = 19;
};

/// Gold response against `negatives` sampled from the split's own utterance
/// pool. The keyword input is one gold keyword of the response, chosen with
/// the training seed.
TrainHistory train_retrieval(RetrievalModel& model, const std::vector<Conversation>& train,
                             const KeywordVocabulary& vocab, const RetrievalTrainConfig& config,
                             const std::function<void(std::size_t, double)>& on_epoch = {});

/// Supplies the keyword fed to the scorer for a test turn (nullopt: none).
using KeywordFn = std::function<std::optional<std::string>(const TurnExample&)>;

/// For every test turn: `negatives` seeded negatives from the test pool plus
/// the gold at a seeded position; R_20@1/3/5 and MRR over the gold ranks.
RetrievalMetrics evaluate_retrieval(const RetrievalModel& model, const std::vector<Conversation>& test,
                                    std::uint64_t seed, std::size_t negatives = 19, const KeywordFn& keyword_fn = {});
RetrievalMetrics evaluate_retrieval_serial(const RetrievalModel& model, const std::vector<Conversation>& test,
                                           std::uint64_t seed, std::size_t negatives = 19,
                                           const KeywordFn& keyword_fn = {});

}  // namespace dkrn
