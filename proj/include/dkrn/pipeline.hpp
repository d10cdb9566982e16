// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dkrn/agent.hpp"
#include "dkrn/corpus.hpp"
#include "dkrn/embeddings.hpp"
#include "dkrn/kgraph.hpp"
#include "dkrn/predictor.hpp"
#include "dkrn/retrieval.hpp"

namespace dkrn {

/// End-to-end synthetic run: corpus, vocabulary, splits, graph and every
/// model the agent variants need.
struct ExperimentConfig {
  SyntheticConfig corpus;
  std::uint64_t min_keyword_frequency = 1;
  SplitRatios split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 11;
  PredictorConfig predictor;
  TrainConfig predictor_train;
  RetrievalConfig retrieval;
  RetrievalTrainConfig retrieval_train;
  bool train_neural = true;
  bool train_retrieval = true;

  /// Small dimensions and epoch counts sized for a few seconds per model.
  static ExperimentConfig desk_scale();
};

struct Experiment {
  Experiment() = default;
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  SyntheticCorpus synthetic;
  CorpusSplit split;
  KeywordVocabulary vocab;
  EmbeddingTable embeddings;
  KeywordGraph graph;
  TokenVocabulary tokens;
  PredictorModel dkrn;
  PredictorModel neural;
  PmiTable pmi;
  RetrievalModel retrieval_keyword;
  RetrievalModel retrieval_plain;
  CandidateBank bank;              // annotated training utterances
  std::vector<Utterance> starts;   // annotated test utterances

  TrainHistory dkrn_history, neural_history, retrieval_keyword_history, retrieval_plain_history;

  AgentResources resources(ChooseMode mode = ChooseMode::greedy) const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Builds every artifact in memory. Deterministic given the config.
std::unique_ptr<Experiment> run_synthetic_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// One row of the turn-level table; absent halves print as "-".
struct TurnLevelRow {
  std::string system;
  std::optional<KeywordMetrics> keyword;
  std::optional<RetrievalMetrics> retrieval;
};

/// "system  R_w@1 R_w@3 R_w@5 P@1  R_20@1 R_20@3 R_20@5 MRR", tab-separated.
std::string format_turn_level_table(const std::vector<TurnLevelRow>& rows);

/// Keyword fed to the keyword-augmented scorer: the predictor's top keyword
/// for the turn (routed when `graph` is given and routing is enabled).
KeywordFn predicted_keyword_fn(const PredictorModel& model, const KeywordGraph* graph, const KeywordVocabulary& vocab);
/// Same, from the PMI scores of the turn's context keywords.
KeywordFn pmi_keyword_fn(const PmiTable& table, const KeywordVocabulary& vocab, std::size_t window);

/// All utterances of the conversations, in order.
std::vector<Utterance> flatten_utterances(const std::vector<Conversation>& conversations);

}  // namespace dkrn
