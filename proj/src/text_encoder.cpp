// SPDX-License-Identifier: Apache-2.0
#include "dkrn/text_encoder.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "dkrn/error.hpp"

namespace dkrn {

TokenVocabulary::TokenVocabulary() : TokenVocabulary(std::vector<std::string>{}) {}

TokenVocabulary::TokenVocabulary(const std::vector<std::string>& tokens) {
  tokens_ = {"<unk>", "<sep>"};
  for (const auto& t : tokens) {
    if (t == "<unk>" || t == "<sep>") continue;
    tokens_.push_back(t);
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw DataError("duplicate token '" + tokens_[i] + "'");
  }
}

TokenVocabulary TokenVocabulary::build(const std::vector<Conversation>& conversations,
                                       const KeywordVocabulary& keywords) {
  std::set<std::string> seen;
  for (const auto& c : conversations) {
    for (const auto& u : c.utterances) seen.insert(u.tokens.begin(), u.tokens.end());
  }
  for (const auto& e : keywords.entries()) {
    for (auto& t : tokenize(e.word)) seen.insert(std::move(t));
  }
  return TokenVocabulary(std::vector<std::string>(seen.begin(), seen.end()));
}

std::size_t TokenVocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> TokenVocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::string TokenVocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 2; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\n';
  }
  return out;
}

TokenVocabulary TokenVocabulary::deserialize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return TokenVocabulary(tokens);
}

std::vector<std::size_t> context_ids(std::span<const Utterance> history, const TokenVocabulary& vocab,
                                     std::size_t window, std::size_t max_tokens) {
  const std::size_t first = history.size() > window ? history.size() - window : 0;
  std::vector<std::size_t> ids;
  for (std::size_t i = first; i < history.size(); ++i) {
    if (i > first) ids.push_back(TokenVocabulary::kSep);
    for (const auto& t : history[i].tokens) ids.push_back(vocab.id(t));
  }
  if (ids.size() > max_tokens) ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(max_tokens));
  return ids;
}

void init_embedding_matrix(nn::Parameter& matrix, const TokenVocabulary& vocab, const EmbeddingTable* pretrained,
                           Rng& rng) {
  const std::size_t dim = matrix.shape.at(1);
  if (matrix.shape.at(0) != vocab.size()) throw ShapeError("embedding matrix rows do not match token vocabulary");
  if (pretrained && pretrained->dim() != dim) {
    throw ConfigError("pretrained embeddings have dim " + std::to_string(pretrained->dim()) + ", model expects " +
                      std::to_string(dim));
  }
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    const auto v = pretrained ? pretrained->lookup(vocab.token(r)) : std::nullopt;
    for (std::size_t d = 0; d < dim; ++d) {
      // Draw unconditionally so the stream does not depend on table coverage.
      const double u = uniform_real(rng, -0.08, 0.08);
      matrix.value[r * dim + d] = v ? (*v)[d] : u;
    }
  }
}

KeywordSet context_keywords(std::span<const Utterance> history, std::size_t window) {
  if (history.empty()) return {};
  if (!history.back().keywords.empty()) return history.back().keywords;
  KeywordSet all;
  const std::size_t first = history.size() > window ? history.size() - window : 0;
  for (std::size_t i = first; i < history.size(); ++i) all.insert(history[i].keywords.begin(), history[i].keywords.end());
  return all;
}

}  // namespace dkrn
