// SPDX-License-Identifier: Apache-2.0
#include "dkrn/agent.hpp"

#include <algorithm>
#include <cctype>

#include "dkrn/error.hpp"
#include "dkrn/nn/tape.hpp"
#include "dkrn/text_encoder.hpp"

namespace dkrn {

namespace {

constexpr std::size_t kTopKeywords = 10;

std::vector<std::pair<KeywordId, double>> top_keywords(std::span<const double> scores) {
  std::vector<KeywordId> order(scores.size());
  for (KeywordId k = 0; k < order.size(); ++k) order[k] = k;
  const auto n = std::min(kTopKeywords, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](KeywordId a, KeywordId b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  std::vector<std::pair<KeywordId, double>> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(order[i], scores[order[i]]);
  return out;
}

double best_closeness(const Utterance& u, const TargetSpec& target, double floor) {
  for (KeywordId k : u.keywords) floor = std::max(floor, target.closeness[k]);
  return floor;
}

Utterance as_speaker(const Utterance& u, Speaker s) {
  Utterance out = u;
  out.speaker = s;
  return out;
}

}  // namespace

std::string_view to_string(AgentVariant v) {
  switch (v) {
    case AgentVariant::dkrn:
      return "dkrn";
    case AgentVariant::neural:
      return "neural";
    case AgentVariant::retrieval_stgy:
      return "retrieval-stgy";
    case AgentVariant::retrieval:
      return "retrieval";
    case AgentVariant::pmi:
      return "pmi";
  }
  return "dkrn";
}

std::optional<AgentVariant> parse_variant(std::string_view s) {
  std::string norm;
  for (char c : s) norm.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (auto v : all_variants()) {
    if (to_string(v) == norm) return v;
  }
  return std::nullopt;
}

const std::vector<AgentVariant>& all_variants() {
  static const std::vector<AgentVariant> v{AgentVariant::retrieval, AgentVariant::retrieval_stgy, AgentVariant::pmi,
                                           AgentVariant::neural, AgentVariant::dkrn};
  return v;
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::ongoing:
      return "ongoing";
    case Status::success:
      return "success";
    case Status::failure:
      return "failure";
  }
  return "ongoing";
}

void AgentResources::require(AgentVariant v) const {
  std::vector<std::string> missing;
  if (!vocab) missing.push_back("keyword vocabulary");
  if (!embeddings) missing.push_back("embeddings");
  if (!bank) missing.push_back("candidate bank");
  const bool plain = v == AgentVariant::retrieval || v == AgentVariant::retrieval_stgy;
  if (plain && !retrieval_plain) missing.push_back("keyword-free retrieval model");
  if (!plain && !retrieval_keyword) missing.push_back("keyword retrieval model");
  if (v == AgentVariant::dkrn && !dkrn) missing.push_back("routed predictor");
  if (v == AgentVariant::dkrn && !graph) missing.push_back("keyword graph");
  if (v == AgentVariant::neural && !neural) missing.push_back("unrouted predictor");
  if (v == AgentVariant::pmi && !pmi) missing.push_back("PMI table");
  if (bank) {
    if (plain && bank->plain_features.features.size() != bank->utterances.size())
      missing.push_back("keyword-free bank encoding");
    if (!plain && bank->keyword_features.features.size() != bank->utterances.size())
      missing.push_back("keyword bank encoding");
  }
  if (missing.empty()) return;
  std::string msg = "agent '" + std::string(to_string(v)) + "' is missing:";
  for (const auto& m : missing) msg += " " + m + ";";
  msg.pop_back();
  throw ConfigError(msg);
}

CandidateBank make_candidate_bank(std::vector<Utterance> utterances, const RetrievalModel* keyword_model,
                                  const RetrievalModel* plain_model) {
  CandidateBank bank;
  bank.utterances = std::move(utterances);
  std::vector<const Utterance*> ptrs;
  ptrs.reserve(bank.utterances.size());
  for (const auto& u : bank.utterances) ptrs.push_back(&u);
  if (keyword_model) bank.keyword_features = keyword_model->encode_pool(ptrs);
  if (plain_model) bank.plain_features = plain_model->encode_pool(ptrs);
  return bank;
}

ConversationState start_conversation(TargetSpec target, Utterance opening, std::size_t max_turns,
                                     std::vector<std::size_t> pool, Speaker opener) {
  if (max_turns == 0) throw ConfigError("max_turns must be positive");
  ConversationState state;
  state.target = std::move(target);
  state.max_turns = max_turns;
  std::sort(pool.begin(), pool.end());
  state.pool = std::move(pool);
  opening.speaker = opener;
  update_state(state.guidance, opening, state.target, 0);
  if (check_target_achieved(opening, state.target)) state.status = Status::success;
  state.utterances.push_back(std::move(opening));
  return state;
}

AgentReply respond(const ConversationState& state, AgentVariant variant, const AgentResources& res, Rng& rng) {
  if (state.status != Status::ongoing) throw StateError("conversation is already " + std::string(to_string(state.status)));
  if (state.pool.empty()) throw StateError("conversation has an empty candidate pool");
  res.require(variant);
  const auto& target = state.target;
  const std::span<const Utterance> history(state.utterances);

  TurnDiagnostics d;
  d.turn = state.turn_count + 1;
  d.variant = variant;
  d.threshold_before = state.guidance.threshold;
  d.context_keywords = context_keywords(history, 2);

  const CandidateBank& bank = *res.bank;
  RankedCandidates ranked;
  std::size_t chosen = 0;

  if (variant == AgentVariant::retrieval || variant == AgentVariant::retrieval_stgy) {
    ranked = res.retrieval_plain->rank_subset(history, std::nullopt, bank.plain_features, state.pool);
    if (variant == AgentVariant::retrieval_stgy) {
      d.valid_size = valid_keywords(target, state.guidance.threshold).size();
      std::vector<const KeywordSet*> kws;
      kws.reserve(ranked.size());
      for (const auto& r : ranked) kws.push_back(&bank.utterances[r.index].keywords);
      const auto choice = choose_response(kws, std::nullopt, state.guidance.threshold, target);
      chosen = choice.rank;
      d.response_relaxed = choice.relaxed;
    }
  } else {
    std::vector<double> scores, logits;
    if (variant == AgentVariant::pmi) {
      logits = predict_pmi(d.context_keywords, *res.pmi);
      scores.reserve(logits.size());
      for (double x : logits) scores.push_back(nn::sigmoid(x));
    } else {
      const PredictorModel& model = variant == AgentVariant::dkrn ? *res.dkrn : *res.neural;
      auto pred = model.predict(history, variant == AgentVariant::dkrn ? res.graph : nullptr);
      d.context_keywords = pred.context;
      scores = std::move(pred.scores);
      logits = std::move(pred.logits);
    }
    const auto valid = valid_keywords(target, state.guidance.threshold);
    d.valid_size = valid.size();
    d.top_keywords = top_keywords(scores);
    const auto kc = choose_keyword(scores, logits, valid, target, res.mode, rng);
    d.predicted_keyword = kc.keyword;
    d.predicted_closeness = target.closeness[kc.keyword];
    d.keyword_fallback = kc.fallback;

    ranked = res.retrieval_keyword->rank_subset(history, res.vocab->word(kc.keyword), bank.keyword_features,
                                                state.pool);
    std::vector<const KeywordSet*> kws;
    kws.reserve(ranked.size());
    for (const auto& r : ranked) kws.push_back(&bank.utterances[r.index].keywords);
    const auto choice = choose_response(kws, kc.keyword, d.predicted_closeness, target);
    chosen = choice.rank;
    d.response_relaxed = choice.relaxed;
  }

  d.response_rank = chosen;
  AgentReply reply{as_speaker(bank.utterances[ranked[chosen].index], Speaker::agent), std::move(d)};
  reply.diagnostics.threshold_after = best_closeness(reply.utterance, target, reply.diagnostics.threshold_before);
  return reply;
}

void append_agent(ConversationState& state, Utterance utterance, TurnDiagnostics diagnostics) {
  if (state.status != Status::ongoing) throw StateError("conversation is already " + std::string(to_string(state.status)));
  utterance.speaker = Speaker::agent;
  ++state.turn_count;
  update_state(state.guidance, utterance, state.target, state.utterances.size());
  diagnostics.threshold_after = state.guidance.threshold;
  if (check_target_achieved(utterance, state.target)) state.status = Status::success;
  state.utterances.push_back(std::move(utterance));
  state.diagnostics.push_back(std::move(diagnostics));
}

void append_user(ConversationState& state, Utterance utterance) {
  if (state.status != Status::ongoing) throw StateError("conversation is already " + std::string(to_string(state.status)));
  utterance.speaker = Speaker::user;
  update_state(state.guidance, utterance, state.target, state.utterances.size());
  if (check_target_achieved(utterance, state.target)) state.status = Status::success;
  state.utterances.push_back(std::move(utterance));
}

void close_exchange(ConversationState& state) {
  if (state.status == Status::ongoing && state.turn_count >= state.max_turns) state.status = Status::failure;
}

void step_conversation(ConversationState& state, AgentReply agent_reply, std::optional<Utterance> user_reply) {
  append_agent(state, std::move(agent_reply.utterance), std::move(agent_reply.diagnostics));
  if (user_reply && state.status == Status::ongoing) append_user(state, std::move(*user_reply));
  close_exchange(state);
}

Utterance simulated_user_reply(const ConversationState& state, const AgentResources& res,
                               const std::vector<std::size_t>& pool, bool no_repeat) {
  if (!res.retrieval_plain || !res.bank) throw ConfigError("simulated user needs the keyword-free retrieval model");
  if (res.bank->plain_features.features.size() != res.bank->utterances.size())
    throw ConfigError("simulated user needs the keyword-free bank encoding");
  if (pool.empty()) throw StateError("simulated user has an empty candidate pool");
  const auto ranked = res.retrieval_plain->rank_subset(state.utterances, std::nullopt, res.bank->plain_features, pool);
  std::size_t pick = ranked.front().index;
  if (no_repeat) {
    for (const auto& r : ranked) {
      const auto& text = res.bank->utterances[r.index].text;
      const bool seen = std::any_of(state.utterances.begin(), state.utterances.end(),
                                    [&](const Utterance& u) { return u.text == text; });
      if (!seen) {
        pick = r.index;
        break;
      }
    }
  }
  return as_speaker(res.bank->utterances[pick], Speaker::user);
}

nlohmann::json diagnostics_json(const TurnDiagnostics& d, const KeywordVocabulary& vocab) {
  nlohmann::json j;
  j["turn"] = d.turn;
  j["variant"] = std::string(to_string(d.variant));
  auto ctx = nlohmann::json::array();
  for (KeywordId k : d.context_keywords) ctx.push_back(vocab.word(k));
  j["context_keywords"] = ctx;
  j["threshold_before"] = d.threshold_before;
  j["threshold_after"] = d.threshold_after;
  j["valid_size"] = d.valid_size;
  if (d.predicted_keyword) {
    j["predicted_keyword"] = vocab.word(*d.predicted_keyword);
    j["predicted_closeness"] = d.predicted_closeness;
  } else {
    j["predicted_keyword"] = nullptr;
    j["predicted_closeness"] = nullptr;
  }
  j["keyword_fallback"] = std::string(to_string(d.keyword_fallback));
  j["response_rank"] = d.response_rank;
  j["response_relaxed"] = d.response_relaxed;
  auto top = nlohmann::json::array();
  for (const auto& [k, p] : d.top_keywords) top.push_back({{"keyword", vocab.word(k)}, {"score", p}});
  j["top_keywords"] = top;
  return j;
}

nlohmann::json transcript_json(const ConversationState& state, const KeywordVocabulary& vocab) {
  nlohmann::json j;
  j["target"] = state.target.word;
  j["status"] = std::string(to_string(state.status));
  j["turns"] = state.turn_count;
  j["max_turns"] = state.max_turns;
  j["threshold"] = state.guidance.threshold;
  auto utts = nlohmann::json::array();
  for (const auto& u : state.utterances) {
    auto kws = nlohmann::json::array();
    for (KeywordId k : u.keywords) kws.push_back(vocab.word(k));
    utts.push_back({{"speaker", std::string(to_string(u.speaker))}, {"text", u.text}, {"keywords", kws}});
  }
  j["utterances"] = utts;
  auto diags = nlohmann::json::array();
  for (const auto& d : state.diagnostics) diags.push_back(diagnostics_json(d, vocab));
  j["diagnostics"] = diags;
  return j;
}

}  // namespace dkrn
