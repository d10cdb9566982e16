// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit tests.
#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unistd.h>

#include "dkrn/corpus.hpp"
#include "dkrn/pipeline.hpp"

namespace dkrn::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dkrn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Utterance make_utterance(const std::string& text, Speaker speaker = Speaker::user) {
  Utterance u;
  u.speaker = speaker;
  u.text = text;
  u.tokens = tokenize(text);
  return u;
}

inline Utterance make_utterance(const std::string& text, const KeywordVocabulary& vocab,
                                Speaker speaker = Speaker::user) {
  auto u = make_utterance(text, speaker);
  annotate_keywords(u, vocab);
  return u;
}

inline Conversation make_conversation(std::string id, const std::vector<std::string>& texts) {
  Conversation c;
  c.id = std::move(id);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    c.utterances.push_back(make_utterance(texts[i], i % 2 == 0 ? Speaker::user : Speaker::agent));
  }
  return c;
}

/// A lightly trained synthetic experiment shared by the tests of one binary.
inline const Experiment& small_experiment() {
  static const std::unique_ptr<Experiment> ex = [] {
    auto cfg = ExperimentConfig::desk_scale();
    cfg.corpus.n_conversations = 160;
    cfg.predictor_train.epochs = 3;
    cfg.retrieval_train.base.epochs = 2;
    return run_synthetic_experiment(cfg);
  }();
  return *ex;
}

}  // namespace dkrn::test
