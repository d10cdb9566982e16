// SPDX-License-Identifier: Apache-2.0
#include "dkrn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dkrn/error.hpp"

namespace dkrn {

std::string_view to_string(Speaker s) { return s == Speaker::agent ? "agent" : "user"; }

Speaker parse_speaker(std::string_view s) {
  if (s == "agent") return Speaker::agent;
  if (s == "user") return Speaker::user;
  throw DataError("unknown speaker '" + std::string(s) + "'");
}

namespace {

bool is_separator(unsigned char c) {
  return c < 0x80 && (std::isspace(c) || std::ispunct(c));
}

// Splits s into UTF-8 code points; invalid lead bytes are taken as one byte.
std::vector<std::string_view> codepoints(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    len = std::min(len, s.size() - i);
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

std::size_t codepoint_length(std::string_view s) { return codepoints(s).size(); }

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config) {
  std::vector<std::string> chunks;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_separator(c)) {
      if (!current.empty()) chunks.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!current.empty()) chunks.push_back(std::move(current));

  if (config.mode == TokenizerMode::whitespace) return chunks;

  std::vector<std::string> tokens;
  for (const auto& chunk : chunks) {
    const auto cps = codepoints(chunk);
    if (cps.size() == 1) {
      tokens.emplace_back(cps[0]);
      continue;
    }
    for (std::size_t i = 0; i + 1 < cps.size(); ++i) {
      tokens.push_back(std::string(cps[i]) + std::string(cps[i + 1]));
    }
  }
  return tokens;
}

void tokenize_corpus(std::vector<Conversation>& conversations, const TokenizerConfig& config) {
  for (auto& c : conversations) {
    for (auto& u : c.utterances) u.tokens = tokenize(u.text, config);
  }
}

// ---------------------------------------------------------------------------

KeywordVocabulary::KeywordVocabulary(std::vector<Entry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i].word, static_cast<KeywordId>(i)).second) {
      throw DataError("duplicate keyword '" + entries_[i].word + "'");
    }
  }
}

std::optional<KeywordId> KeywordVocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void KeywordVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& e : entries_) out << e.word << '\t' << e.frequency << '\n';
}

KeywordVocabulary KeywordVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<Entry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected word<TAB>frequency");
    }
    Entry e;
    e.word = line.substr(0, tab);
    try {
      e.frequency = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad frequency");
    }
    entries.push_back(std::move(e));
  }
  return KeywordVocabulary(std::move(entries));
}

KeywordVocabulary build_vocabulary(const std::vector<Conversation>& conversations,
                                   const VocabularyRules& rules) {
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& c : conversations) {
    for (const auto& u : c.utterances) {
      for (const auto& t : u.tokens) ++counts[t];
    }
  }
  if (counts.empty()) throw ConfigError("empty vocabulary: corpus has no tokens");

  // Apply the rules in order so an empty result can name the rule that emptied it.
  std::vector<std::pair<std::string, std::uint64_t>> pool(counts.begin(), counts.end());
  auto filter = [&](auto keep, const std::string& rule) {
    std::erase_if(pool, [&](const auto& p) { return !keep(p); });
    if (pool.empty()) throw ConfigError("empty vocabulary: no token satisfies " + rule);
  };
  filter([&](const auto& p) { return p.second >= rules.min_frequency; },
         "min_frequency=" + std::to_string(rules.min_frequency));
  filter([&](const auto& p) { return codepoint_length(p.first) > rules.min_length; },
         "min_length=" + std::to_string(rules.min_length));
  if (rules.content_lexicon) {
    filter([&](const auto& p) { return rules.content_lexicon->contains(p.first); },
           "content_lexicon membership");
  }
  filter([&](const auto& p) { return !rules.stopwords.contains(p.first); }, "stopword exclusion");

  std::sort(pool.begin(), pool.end());
  std::vector<KeywordVocabulary::Entry> entries;
  entries.reserve(pool.size());
  for (auto& [word, freq] : pool) entries.push_back({word, freq});
  return KeywordVocabulary(std::move(entries));
}

void annotate_keywords(Utterance& utterance, const KeywordVocabulary& vocab) {
  utterance.keywords.clear();
  for (const auto& t : utterance.tokens) {
    if (auto id = vocab.find(t)) utterance.keywords.insert(*id);
  }
}

void annotate_keywords(Conversation& conversation, const KeywordVocabulary& vocab) {
  for (auto& u : conversation.utterances) annotate_keywords(u, vocab);
}

void annotate_keywords(std::vector<Conversation>& conversations, const KeywordVocabulary& vocab) {
  for (auto& c : conversations) annotate_keywords(c, vocab);
}

std::unordered_set<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word list " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (auto& w : tokenize(line)) words.insert(std::move(w));
  }
  return words;
}

// ---------------------------------------------------------------------------

CorpusSplit split_corpus(std::vector<Conversation> conversations, const SplitRatios& ratios,
                         std::uint64_t seed) {
  const double total = ratios.train + ratios.validation + ratios.test;
  if (std::abs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  if (conversations.size() < 3) {
    throw DataError("need at least 3 conversations to split, got " +
                    std::to_string(conversations.size()));
  }
  Rng rng(seed);
  shuffle(conversations, rng);

  const auto n = static_cast<double>(conversations.size());
  const auto n_valid = static_cast<std::size_t>(std::llround(n * ratios.validation));
  const auto n_test = static_cast<std::size_t>(std::llround(n * ratios.test));
  const std::size_t n_train = conversations.size() - n_valid - n_test;

  CorpusSplit split;
  auto it = std::make_move_iterator(conversations.begin());
  split.train.assign(it, it + n_train);
  split.validation.assign(it + n_train, it + n_train + n_valid);
  split.test.assign(it + n_train + n_valid, std::make_move_iterator(conversations.end()));
  return split;
}

std::vector<std::size_t> sample_negatives(const std::string& gold_text,
                                          const std::vector<const Utterance*>& pool, std::size_t k,
                                          std::uint64_t seed) {
  if (k == 0) return {};
  std::vector<std::size_t> eligible;
  eligible.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i]->text != gold_text) eligible.push_back(i);
  }
  if (eligible.size() < k) {
    throw DataError("negative pool too small: need " + std::to_string(k) + ", have " +
                    std::to_string(eligible.size()));
  }
  // Partial Fisher-Yates over the eligible indices.
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(eligible[i], eligible[i + uniform_index(rng, eligible.size() - i)]);
  }
  eligible.resize(k);
  return eligible;
}

std::vector<const Utterance*> utterance_pool(const std::vector<Conversation>& conversations) {
  std::vector<const Utterance*> pool;
  for (const auto& c : conversations) {
    for (const auto& u : c.utterances) pool.push_back(&u);
  }
  return pool;
}

// ---------------------------------------------------------------------------

std::string corpus_line(const Conversation& conversation) {
  nlohmann::json j;
  j["id"] = conversation.id;
  auto& utts = j["utterances"] = nlohmann::json::array();
  for (const auto& u : conversation.utterances) {
    utts.push_back({{"speaker", to_string(u.speaker)}, {"text", u.text}});
  }
  return j.dump();
}

void write_corpus(const std::filesystem::path& path, const std::vector<Conversation>& conversations) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus " + path.string());
  for (const auto& c : conversations) out << corpus_line(c) << '\n';
}

std::vector<Conversation> read_corpus(const std::filesystem::path& path,
                                      const TokenizerConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus " + path.string());
  std::vector<Conversation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      Conversation c;
      c.id = j.at("id").get<std::string>();
      for (const auto& u : j.at("utterances")) {
        Utterance utt;
        utt.speaker = parse_speaker(u.at("speaker").get<std::string>());
        utt.text = u.at("text").get<std::string>();
        utt.tokens = tokenize(utt.text, config);
        c.utterances.push_back(std::move(utt));
      }
      if (c.utterances.size() < 2) throw DataError("conversation needs at least 2 utterances");
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string synthetic_keyword(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "topic%03zu", index);
  return buf;
}

namespace {

std::string filler_word(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%03zu", index);
  return buf;
}

std::vector<double> unit(std::vector<double> v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config) {
  const std::size_t nk = config.n_keywords;
  if (nk < 2) throw ConfigError("synthetic corpus needs n_keywords >= 2");
  if (config.min_utterances < 2 || config.max_utterances < config.min_utterances) {
    throw ConfigError("synthetic corpus needs 2 <= min_utterances <= max_utterances");
  }
  if (config.n_fillers == 0 || config.max_fillers_per_utterance < config.min_fillers_per_utterance) {
    throw ConfigError("synthetic corpus filler settings are inconsistent");
  }
  const bool ring = config.structure == ChainStructure::ring;
  if (config.embedding_dim < (ring ? 3 : nk + 1)) {
    throw ConfigError("synthetic embedding_dim too small for the keyword layout");
  }

  SyntheticCorpus out;
  for (std::size_t i = 0; i < nk; ++i) out.keywords.push_back(synthetic_keyword(i));
  out.lexicon = out.keywords;
  for (std::size_t i = 0; i + 1 < nk; ++i) out.planted_edges.emplace(i, i + 1);
  if (ring) out.planted_edges.emplace(nk - 1, 0);

  Rng rng(config.seed);
  for (std::size_t c = 0; c < config.n_conversations; ++c) {
    std::size_t length = config.min_utterances +
                         uniform_index(rng, config.max_utterances - config.min_utterances + 1);
    std::size_t start;
    if (ring) {
      start = uniform_index(rng, nk);
    } else {
      // Chains cannot run past the last keyword.
      length = std::min(length, nk);
      start = uniform_index(rng, nk - length + 1);
    }
    Conversation conv;
    conv.id = "syn-" + std::to_string(c);
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t kw = (start + i) % nk;
      const std::size_t n_fill =
          config.min_fillers_per_utterance +
          uniform_index(rng, config.max_fillers_per_utterance - config.min_fillers_per_utterance + 1);
      std::vector<std::string> words;
      for (std::size_t f = 0; f < n_fill; ++f) words.push_back(filler_word(uniform_index(rng, config.n_fillers)));
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, words.size() + 1)),
                   out.keywords[kw]);
      Utterance u;
      u.speaker = i % 2 == 0 ? Speaker::user : Speaker::agent;
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (w) u.text += ' ';
        u.text += words[w];
      }
      u.tokens = tokenize(u.text);
      conv.utterances.push_back(std::move(u));
    }
    out.conversations.push_back(std::move(conv));
  }

  // Keyword geometry: chain keywords follow an AR(1) recursion so that
  // closeness(i, j) = rho^|i-j|; ring keywords sit evenly on a circle.
  const std::size_t dim = config.embedding_dim;
  const std::size_t kw_dims = ring ? 2 : nk;
  if (ring) {
    for (std::size_t i = 0; i < nk; ++i) {
      std::vector<double> v(dim, 0.0);
      const double a = 6.283185307179586 * static_cast<double>(i) / static_cast<double>(nk);
      v[0] = std::cos(a);
      v[1] = std::sin(a);
      out.embeddings.emplace_back(out.keywords[i], v);
    }
  } else {
    const double rho = config.chain_correlation;
    const double tail = std::sqrt(1.0 - rho * rho);
    std::vector<double> prev(dim, 0.0);
    for (std::size_t i = 0; i < nk; ++i) {
      std::vector<double> v(dim, 0.0);
      if (i == 0) {
        v[0] = 1.0;
      } else {
        for (std::size_t d = 0; d < dim; ++d) v[d] = rho * prev[d];
        v[i] = tail;
      }
      out.embeddings.emplace_back(out.keywords[i], v);
      prev = v;
    }
  }
  // Fillers live in the remaining dimensions, orthogonal to every keyword.
  const std::size_t free_dims = dim - kw_dims;
  for (std::size_t f = 0; f < config.n_fillers; ++f) {
    std::vector<double> v(dim, 0.0);
    if (free_dims == 0) {
      v[0] = 1.0;
    } else {
      for (std::size_t d = kw_dims; d < dim; ++d) v[d] = normal(rng);
    }
    out.embeddings.emplace_back(filler_word(f), unit(std::move(v)));
  }
  return out;
}

}  // namespace dkrn
