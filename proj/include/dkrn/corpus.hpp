// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dkrn/random.hpp"

namespace dkrn {

using KeywordId = std::uint32_t;
using KeywordSet = std::set<KeywordId>;

enum class Speaker { agent, user };

std::string_view to_string(Speaker s);
Speaker parse_speaker(std::string_view s);

struct Utterance {
  Speaker speaker = Speaker::user;
  std::string text;
  std::vector<std::string> tokens;
  KeywordSet keywords;
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;
};

// ---------------------------------------------------------------------------
// Tokenization

enum class TokenizerMode { whitespace, char_bigram };

struct TokenizerConfig {
  TokenizerMode mode = TokenizerMode::whitespace;
};

/// Lowercases ASCII, turns ASCII punctuation into separators and splits on
/// whitespace. In char_bigram mode each whitespace chunk is split into
/// overlapping code-point bigrams (a one-code-point chunk yields itself).
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config = {});

/// Number of UTF-8 code points in s.
std::size_t codepoint_length(std::string_view s);

/// Fills tokens of every utterance from its text.
void tokenize_corpus(std::vector<Conversation>& conversations, const TokenizerConfig& config = {});

// ---------------------------------------------------------------------------
// Keyword vocabulary

struct VocabularyRules {
  std::uint64_t min_frequency = 2000;
  std::size_t min_length = 2;  // keywords need strictly more code points than this
  std::optional<std::unordered_set<std::string>> content_lexicon;
  std::unordered_set<std::string> stopwords;
};

class KeywordVocabulary {
 public:
  struct Entry {
    std::string word;
    std::uint64_t frequency = 0;
  };

  KeywordVocabulary() = default;
  /// Entries get ids in the given order.
  explicit KeywordVocabulary(std::vector<Entry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& entry(KeywordId id) const { return entries_.at(id); }
  const std::string& word(KeywordId id) const { return entries_.at(id).word; }
  std::optional<KeywordId> find(std::string_view word) const;
  const std::vector<Entry>& entries() const { return entries_; }

  /// Tab-separated "word<TAB>frequency" per line; id = line index.
  void save(const std::filesystem::path& path) const;
  static KeywordVocabulary load(const std::filesystem::path& path);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, KeywordId> index_;
};

/// Counts token frequencies over every utterance and keeps tokens passing all
/// rules, ordered lexicographically. Throws ConfigError naming the rule that
/// left the vocabulary empty.
KeywordVocabulary build_vocabulary(const std::vector<Conversation>& conversations,
                                   const VocabularyRules& rules);

/// Sets each utterance's keyword set to the vocabulary ids of its tokens.
void annotate_keywords(Conversation& conversation, const KeywordVocabulary& vocab);
void annotate_keywords(std::vector<Conversation>& conversations, const KeywordVocabulary& vocab);
void annotate_keywords(Utterance& utterance, const KeywordVocabulary& vocab);

/// One lowercase word per line; blank lines and '#' comments ignored.
std::unordered_set<std::string> load_word_list(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Splits and sampling

struct SplitRatios {
  double train = 0.9;
  double validation = 0.05;
  double test = 0.05;
};

struct CorpusSplit {
  std::vector<Conversation> train;
  std::vector<Conversation> validation;
  std::vector<Conversation> test;
};

/// Seeded shuffle then partition. Validation and test sizes are rounded from
/// their ratios; train takes the remainder.
CorpusSplit split_corpus(std::vector<Conversation> conversations, const SplitRatios& ratios,
                         std::uint64_t seed);

/// k distinct indices into pool, skipping any member whose text equals the
/// gold response. Throws DataError if fewer than k eligible members exist.
std::vector<std::size_t> sample_negatives(const std::string& gold_text,
                                          const std::vector<const Utterance*>& pool, std::size_t k,
                                          std::uint64_t seed);

/// All utterances of the given conversations, in corpus order.
std::vector<const Utterance*> utterance_pool(const std::vector<Conversation>& conversations);

// ---------------------------------------------------------------------------
// Corpus files: one JSON object per line,
//   {"id": "...", "utterances": [{"speaker": "user", "text": "..."}, ...]}

std::vector<Conversation> read_corpus(const std::filesystem::path& path,
                                      const TokenizerConfig& config = {});
void write_corpus(const std::filesystem::path& path, const std::vector<Conversation>& conversations);
std::string corpus_line(const Conversation& conversation);

// ---------------------------------------------------------------------------
// Synthetic corpora with a planted keyword transition graph

enum class ChainStructure { chain, ring };

struct SyntheticConfig {
  std::size_t n_keywords = 10;
  std::size_t n_conversations = 500;
  ChainStructure structure = ChainStructure::chain;
  std::size_t min_utterances = 3;
  std::size_t max_utterances = 6;
  std::size_t n_fillers = 60;
  std::size_t min_fillers_per_utterance = 3;
  std::size_t max_fillers_per_utterance = 6;
  std::size_t embedding_dim = 16;
  double chain_correlation = 0.8;
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  std::vector<Conversation> conversations;
  std::vector<std::string> keywords;                           // index = planted keyword index
  std::set<std::pair<std::size_t, std::size_t>> planted_edges;  // over planted indices
  std::vector<std::string> lexicon;                            // keyword words only
  std::vector<std::pair<std::string, std::vector<double>>> embeddings;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config);

std::string synthetic_keyword(std::size_t index);

}  // namespace dkrn
