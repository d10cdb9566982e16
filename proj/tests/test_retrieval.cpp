// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dkrn/error.hpp"
#include "dkrn/nn/grad_check.hpp"
#include "dkrn/nn/inference.hpp"
#include "dkrn/retrieval.hpp"
#include "support.hpp"

using namespace dkrn;

namespace {

struct Fixture {
  std::vector<Conversation> convs;
  KeywordVocabulary vocab;

  explicit Fixture(std::size_t n = 60) {
    SyntheticConfig cfg;
    cfg.n_conversations = n;
    auto syn = generate_synthetic_corpus(cfg);
    VocabularyRules rules;
    rules.min_frequency = 1;
    rules.content_lexicon = std::unordered_set<std::string>(syn.lexicon.begin(), syn.lexicon.end());
    vocab = build_vocabulary(syn.conversations, rules);
    convs = std::move(syn.conversations);
    annotate_keywords(convs, vocab);
  }

  RetrievalModel model(bool keyword, double init = 0.3, std::uint64_t seed = 5) const {
    RetrievalConfig rc;
    rc.hidden_dim = 5;
    rc.keyword_enabled = keyword;
    rc.init_range = init;
    rc.seed = seed;
    return RetrievalModel(TokenVocabulary::build(convs, vocab), rc);
  }
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("retrieval loss passes finite-difference checks") {
  const Fixture f;
  for (bool keyword : {true, false}) {
    auto m = f.model(keyword);
    const auto& c = f.convs[0].utterances;
    const std::span<const Utterance> history(c.data(), 1);
    std::vector<const Utterance*> negs{&f.convs[1].utterances[0], &f.convs[2].utterances[1]};
    nn::GradCheckOptions opt;
    opt.max_components = 250;
    const auto report = nn::grad_check(
        [&](nn::Tape& t) { return m.example_loss(t, history, std::string("topic002"), c[1], negs); },
        m.parameters(), opt);
    INFO("keyword " << keyword << " worst " << report.worst << " rel " << report.max_rel_error);
    CHECK(report.passed());
    CHECK(report.checked >= 200);
  }
}

TEST_CASE("keyword encoding is the mean of its token embeddings, or zero") {
  const Fixture f;
  auto m = f.model(true);
  const auto id = m.tokens().id("topic003");
  const auto enc = m.encode_keyword(std::string("topic003"));
  for (std::size_t d = 0; d < 5; ++d) CHECK(enc[d] == m.embedding().value[id * 5 + d]);
  CHECK(m.encode_keyword(std::nullopt) == std::vector<double>(5, 0.0));
  const auto plain = f.model(false);
  CHECK(plain.encode_keyword(std::string("topic003")) == std::vector<double>(5, 0.0));
}

TEST_CASE("score is the sigmoid of the dense layer over both matchings") {
  const Fixture f;
  const auto m = f.model(true);
  const auto& c = f.convs[3].utterances;
  const std::span<const Utterance> history(c.data(), 1);
  const auto h = m.encode_history(history);
  const auto r = m.encode_response(c[1]);
  const auto k = m.encode_keyword(std::string("topic004"));
  std::vector<double> feat;
  for (std::size_t d = 0; d < 5; ++d) feat.push_back(r[d] * h[d]);
  for (std::size_t d = 0; d < 5; ++d) feat.push_back(r[d] * k[d]);
  auto copy = m;
  const auto z = nn::dense_forward(copy.output(), feat);
  CHECK(m.score(history, std::string("topic004"), c[1]) == doctest::Approx(sigmoid(z[0])).epsilon(1e-12));
  CHECK(m.score_features(r, h, k) == doctest::Approx(sigmoid(z[0])).epsilon(1e-12));
}

TEST_CASE("ranking orders by probability and agrees across paths") {
  const Fixture f;
  const auto m = f.model(true);
  const auto pool = m.encode_pool(utterance_pool(f.convs));
  const auto& c = f.convs[4].utterances;
  const std::span<const Utterance> history(c.data(), 2);
  const auto ranked = m.rank(history, std::string("topic005"), pool);
  const auto serial = m.rank_serial(history, std::string("topic005"), pool);
  REQUIRE(ranked.size() == pool.utterances.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].index == serial[i].index);
    CHECK(ranked[i].probability == serial[i].probability);
    if (i) {
      CHECK(ranked[i - 1].probability >= ranked[i].probability);
      if (ranked[i - 1].probability == ranked[i].probability) CHECK(ranked[i - 1].index < ranked[i].index);
    }
  }

  const std::vector<std::size_t> subset{7, 3, 11, 0};
  const auto sub = m.rank_subset(history, std::string("topic005"), pool, subset);
  REQUIRE(sub.size() == 4);
  std::vector<std::size_t> expected;
  for (const auto& rc : ranked)
    if (std::find(subset.begin(), subset.end(), rc.index) != subset.end()) expected.push_back(rc.index);
  for (std::size_t i = 0; i < 4; ++i) CHECK(sub[i].index == expected[i]);
  const std::vector<std::size_t> bad{pool.utterances.size()};
  CHECK_THROWS(m.rank_subset(history, std::nullopt, pool, bad));
}

TEST_CASE("retrieval checkpoints keep scores and configuration") {
  dkrn::test::TempDir dir;
  const Fixture f;
  auto m = f.model(true, 0.2);
  m.save(dir / "r.ckpt");
  const auto back = RetrievalModel::load(dir / "r.ckpt");
  CHECK(back.config().init_range == 0.2);
  CHECK(back.keyword_enabled());
  const auto& c = f.convs[0].utterances;
  const std::span<const Utterance> history(c.data(), 1);
  CHECK(back.score(history, std::string("topic001"), c[1]) == m.score(history, std::string("topic001"), c[1]));
}

TEST_CASE("invalid init range is rejected") {
  const Fixture f(5);
  CHECK_THROWS_AS(f.model(true, 0.0), ConfigError);
}

TEST_CASE("untrained retrieval ranks near chance, identically in parallel and serial") {
  const Fixture f(200);
  const auto m = f.model(true, 0.08);
  const auto par = evaluate_retrieval(m, f.convs, 9);
  const auto ser = evaluate_retrieval_serial(m, f.convs, 9);
  CHECK(par.examples == ser.examples);
  CHECK(par.recall_at_1 == ser.recall_at_1);
  CHECK(par.mrr == ser.mrr);
  CHECK(par.examples > 500);
  CHECK(par.recall_at_1 > 0.01);
  CHECK(par.recall_at_1 < 0.12);
}

TEST_CASE("training separates gold responses from negatives") {
  const Fixture f(150);
  auto m = f.model(true, 0.3);
  RetrievalTrainConfig tc;
  tc.base.epochs = 3;
  tc.base.lr = 2e-2;
  tc.base.lr_final = 2e-3;
  tc.base.batch_size = 2;
  const auto before = evaluate_retrieval(m, f.convs, 4);
  const auto hist = train_retrieval(m, f.convs, f.vocab, tc);
  CHECK(hist.train_loss.back() < hist.train_loss.front());
  const auto after = evaluate_retrieval(m, f.convs, 4);
  CHECK(after.mrr > before.mrr);
}
