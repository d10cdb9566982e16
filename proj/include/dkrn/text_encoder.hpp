// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dkrn/corpus.hpp"
#include "dkrn/embeddings.hpp"
#include "dkrn/nn/tape.hpp"

namespace dkrn {

/// Token ids for the trainable embedding matrices. Id 0 is the unknown token
/// and id 1 separates utterances in a context window.
class TokenVocabulary {
 public:
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kSep = 1;

  TokenVocabulary();
  explicit TokenVocabulary(const std::vector<std::string>& tokens);

  /// Every token of the given conversations plus the keyword words.
  static TokenVocabulary build(const std::vector<Conversation>& conversations, const KeywordVocabulary& keywords);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;

  /// Newline-joined token list, for checkpoint metadata.
  std::string serialize() const;
  static TokenVocabulary deserialize(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Token ids of the last `window` utterances joined with the separator,
/// truncated to the last max_tokens ids.
std::vector<std::size_t> context_ids(std::span<const Utterance> history, const TokenVocabulary& vocab,
                                     std::size_t window, std::size_t max_tokens);

/// Fills an embedding matrix (rows = tokens): rows of words present in
/// `pretrained` are copied from it; all others are uniform(-0.08, 0.08).
void init_embedding_matrix(nn::Parameter& matrix, const TokenVocabulary& vocab, const EmbeddingTable* pretrained,
                           Rng& rng);

/// Keyword set S_t: keywords of the latest utterance in the window, or the
/// union over the window when the latest has none.
KeywordSet context_keywords(std::span<const Utterance> history, std::size_t window);

}  // namespace dkrn
