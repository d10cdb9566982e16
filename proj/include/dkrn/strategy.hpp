// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dkrn/corpus.hpp"
#include "dkrn/embeddings.hpp"

namespace dkrn {

/// The keyword a conversation must reach, with its closeness to every
/// vocabulary keyword precomputed.
struct TargetSpec {
  KeywordId keyword = 0;
  std::string word;
  std::vector<double> embedding;
  double achieve_threshold = 0.9;
  std::vector<double> closeness;  // closeness(k, target) for every keyword id k

  /// Throws ConfigError if the word is not a vocabulary keyword or has no
  /// embedding.
  static TargetSpec make(std::string_view word, const KeywordVocabulary& vocab, const EmbeddingTable& table,
                         double achieve_threshold = 0.9);
};

struct GuidanceStep {
  std::size_t turn = 0;
  std::optional<KeywordId> keyword;
  double closeness = 0;
};

/// Running maximum of target closeness over the keywords of every utterance
/// seen so far; starts at 0 and never decreases.
struct GuidanceState {
  double threshold = 0.0;
  std::vector<GuidanceStep> history;
};

/// {k : closeness(k, target) > threshold} plus the target itself, ascending.
std::vector<KeywordId> valid_keywords(const TargetSpec& target, double threshold);

enum class ChooseMode { greedy, sample };

enum class KeywordFallback {
  none,
  raw_logits,  // every valid keyword was routed away; argmax of K over valid
  closeness,   // no usable logits either; closest valid keyword to the target
};

struct KeywordChoice {
  KeywordId keyword = 0;
  KeywordFallback fallback = KeywordFallback::none;
};

/// Picks from `valid` by P (greedy: argmax, ties to the lowest id; sample:
/// proportional to P). Falls back when no valid keyword has P > 1e-6.
/// `logits` may be empty, which skips the raw-logit fallback.
KeywordChoice choose_keyword(std::span<const double> scores, std::span<const double> logits,
                             std::span<const KeywordId> valid, const TargetSpec& target, ChooseMode mode, Rng& rng);

struct ResponseChoice {
  std::size_t rank = 0;   // 0-based position in the ranked list
  bool relaxed = false;   // no candidate qualified; rank 0 taken
};

/// First ranked candidate that contains `predicted` or any keyword closer to
/// the target than `reference_closeness`. Without a predicted keyword only the
/// closeness clause applies.
ResponseChoice choose_response(std::span<const KeywordSet* const> ranked_keywords, std::optional<KeywordId> predicted,
                               double reference_closeness, const TargetSpec& target);

/// True iff the target token occurs in the utterance or one of its keywords
/// reaches the achievement threshold.
bool check_target_achieved(const Utterance& utterance, const TargetSpec& target);

/// Raises the threshold to the utterance's best keyword closeness and logs it.
void update_state(GuidanceState& state, const Utterance& utterance, const TargetSpec& target, std::size_t turn);

std::string_view to_string(KeywordFallback f);

}  // namespace dkrn
