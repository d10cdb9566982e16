// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dkrn/corpus.hpp"
#include "dkrn/embeddings.hpp"
#include "dkrn/kgraph.hpp"
#include "dkrn/predictor.hpp"
#include "dkrn/retrieval.hpp"
#include "dkrn/strategy.hpp"

namespace dkrn {

enum class AgentVariant { dkrn, neural, retrieval_stgy, retrieval, pmi };

std::string_view to_string(AgentVariant v);
/// Accepts "dkrn", "neural", "retrieval-stgy", "retrieval", "pmi" (any case,
/// '_' or '-').
std::optional<AgentVariant> parse_variant(std::string_view s);
const std::vector<AgentVariant>& all_variants();

/// Encoded candidate utterances shared by every session. `utterances` holds
/// the annotated training utterances; each retrieval model has its own
/// encoding of the same list.
struct CandidateBank {
  std::vector<Utterance> utterances;
  EncodedPool keyword_features;  // encoded by the keyword-augmented model
  EncodedPool plain_features;    // encoded by the keyword-free model
};

/// Frozen models and data the agents read. Pointers may be null when a
/// variant does not need them; require() reports what is missing.
struct AgentResources {
  const KeywordVocabulary* vocab = nullptr;
  const EmbeddingTable* embeddings = nullptr;
  const KeywordGraph* graph = nullptr;
  const PredictorModel* dkrn = nullptr;
  const PredictorModel* neural = nullptr;
  const PmiTable* pmi = nullptr;
  const RetrievalModel* retrieval_keyword = nullptr;
  const RetrievalModel* retrieval_plain = nullptr;
  const CandidateBank* bank = nullptr;
  ChooseMode mode = ChooseMode::greedy;

  /// Throws ConfigError naming each resource the variant lacks.
  void require(AgentVariant v) const;
};

/// Encodes `utterances` with whichever retrieval models are present.
CandidateBank make_candidate_bank(std::vector<Utterance> utterances, const RetrievalModel* keyword_model,
                                  const RetrievalModel* plain_model);

enum class Status { ongoing, success, failure };
std::string_view to_string(Status s);

struct TurnDiagnostics {
  std::size_t turn = 0;
  AgentVariant variant = AgentVariant::dkrn;
  KeywordSet context_keywords;
  double threshold_before = 0;
  double threshold_after = 0;
  std::size_t valid_size = 0;
  std::optional<KeywordId> predicted_keyword;
  double predicted_closeness = 0;
  KeywordFallback keyword_fallback = KeywordFallback::none;
  std::size_t response_rank = 0;  // 0-based
  bool response_relaxed = false;
  std::vector<std::pair<KeywordId, double>> top_keywords;  // up to 10, by score
};

struct ConversationState {
  TargetSpec target;
  std::vector<Utterance> utterances;
  GuidanceState guidance;
  std::size_t turn_count = 0;  // agent utterances so far
  std::size_t max_turns = 8;
  Status status = Status::ongoing;
  std::vector<TurnDiagnostics> diagnostics;  // one per agent utterance
  std::vector<std::size_t> pool;             // CandidateBank indices the agent may use
};

/// New conversation opened by `opening`. The opening updates the guidance
/// state and may already achieve the target; it never counts as a turn.
ConversationState start_conversation(TargetSpec target, Utterance opening, std::size_t max_turns,
                                     std::vector<std::size_t> pool, Speaker opener = Speaker::user);

struct AgentReply {
  Utterance utterance;
  TurnDiagnostics diagnostics;
};

/// Runs one agent turn for the variant without mutating the state.
/// Throws StateError if the conversation is over.
AgentReply respond(const ConversationState& state, AgentVariant variant, const AgentResources& resources, Rng& rng);

/// Appends and checks an agent utterance (advances turn_count).
void append_agent(ConversationState& state, Utterance utterance, TurnDiagnostics diagnostics);
/// Appends and checks a user utterance.
void append_user(ConversationState& state, Utterance utterance);
/// Marks failure when the turn budget is spent without success.
void close_exchange(ConversationState& state);
/// append_agent, then append_user when given and still ongoing, then close_exchange.
void step_conversation(ConversationState& state, AgentReply agent_reply, std::optional<Utterance> user_reply);

/// Keyword-free retrieval reply over `pool`; with no_repeat, utterances whose
/// text already occurs in the conversation are skipped.
Utterance simulated_user_reply(const ConversationState& state, const AgentResources& resources,
                               const std::vector<std::size_t>& pool, bool no_repeat);

nlohmann::json diagnostics_json(const TurnDiagnostics& d, const KeywordVocabulary& vocab);
/// Full transcript: target, utterances, diagnostics, status.
nlohmann::json transcript_json(const ConversationState& state, const KeywordVocabulary& vocab);

}  // namespace dkrn
