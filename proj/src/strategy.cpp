// SPDX-License-Identifier: Apache-2.0
#include "dkrn/strategy.hpp"

#include <algorithm>
#include <cmath>

#include "dkrn/error.hpp"

namespace dkrn {

namespace {

constexpr double kMinUsableScore = 1e-6;

}  // namespace

std::string_view to_string(KeywordFallback f) {
  switch (f) {
    case KeywordFallback::none:
      return "none";
    case KeywordFallback::raw_logits:
      return "raw_logits";
    case KeywordFallback::closeness:
      return "closeness";
  }
  return "none";
}

TargetSpec TargetSpec::make(std::string_view word, const KeywordVocabulary& vocab, const EmbeddingTable& table,
                            double achieve_threshold) {
  const auto id = vocab.find(word);
  if (!id) throw ConfigError("target '" + std::string(word) + "' is not a vocabulary keyword");
  const auto v = table.lookup(word);
  if (!v) throw ConfigError("target '" + std::string(word) + "' has no embedding");
  TargetSpec t;
  t.keyword = *id;
  t.word = std::string(word);
  t.embedding.assign(v->begin(), v->end());
  t.achieve_threshold = achieve_threshold;
  t.closeness.resize(vocab.size());
  for (KeywordId k = 0; k < vocab.size(); ++k) t.closeness[k] = dkrn::closeness(vocab.word(k), word, table);
  t.closeness[t.keyword] = 1.0;
  return t;
}

std::vector<KeywordId> valid_keywords(const TargetSpec& target, double threshold) {
  std::vector<KeywordId> valid;
  for (KeywordId k = 0; k < target.closeness.size(); ++k) {
    if (k == target.keyword || target.closeness[k] > threshold) valid.push_back(k);
  }
  return valid;
}

KeywordChoice choose_keyword(std::span<const double> scores, std::span<const double> logits,
                             std::span<const KeywordId> valid, const TargetSpec& target, ChooseMode mode, Rng& rng) {
  if (valid.empty()) throw Error("choose_keyword: empty valid set");
  std::vector<KeywordId> usable;
  for (KeywordId k : valid) {
    if (scores[k] > kMinUsableScore) usable.push_back(k);
  }
  if (!usable.empty()) {
    if (mode == ChooseMode::sample) {
      double total = 0;
      for (KeywordId k : usable) total += scores[k];
      double u = uniform_unit(rng) * total;
      for (KeywordId k : usable) {
        u -= scores[k];
        if (u < 0) return {k, KeywordFallback::none};
      }
      return {usable.back(), KeywordFallback::none};
    }
    KeywordId best = usable.front();
    for (KeywordId k : usable) {
      if (scores[k] > scores[best]) best = k;
    }
    return {best, KeywordFallback::none};
  }
  if (!logits.empty()) {
    KeywordId best = valid.front();
    for (KeywordId k : valid) {
      if (logits[k] > logits[best]) best = k;
    }
    if (std::isfinite(logits[best])) return {best, KeywordFallback::raw_logits};
  }
  KeywordId best = valid.front();
  for (KeywordId k : valid) {
    if (target.closeness[k] > target.closeness[best]) best = k;
  }
  return {best, KeywordFallback::closeness};
}

ResponseChoice choose_response(std::span<const KeywordSet* const> ranked_keywords, std::optional<KeywordId> predicted,
                               double reference_closeness, const TargetSpec& target) {
  if (ranked_keywords.empty()) throw Error("choose_response: no candidates");
  for (std::size_t r = 0; r < ranked_keywords.size(); ++r) {
    const auto& kws = *ranked_keywords[r];
    if (predicted && kws.contains(*predicted)) return {r, false};
    for (KeywordId k : kws) {
      if (target.closeness[k] > reference_closeness) return {r, false};
    }
  }
  return {0, true};
}

bool check_target_achieved(const Utterance& utterance, const TargetSpec& target) {
  if (std::find(utterance.tokens.begin(), utterance.tokens.end(), target.word) != utterance.tokens.end()) return true;
  for (KeywordId k : utterance.keywords) {
    if (k == target.keyword || target.closeness[k] >= target.achieve_threshold) return true;
  }
  return false;
}

void update_state(GuidanceState& state, const Utterance& utterance, const TargetSpec& target, std::size_t turn) {
  GuidanceStep step;
  step.turn = turn;
  double best = -2.0;
  for (KeywordId k : utterance.keywords) {
    if (target.closeness[k] > best) {
      best = target.closeness[k];
      step.keyword = k;
    }
  }
  if (step.keyword) {
    step.closeness = best;
    state.threshold = std::max(state.threshold, best);
  }
  state.history.push_back(step);
}

}  // namespace dkrn
