// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "dkrn/kgraph.hpp"
#include "dkrn/nn/grad_check.hpp"
#include "dkrn/nn/tape.hpp"
#include "dkrn/predictor.hpp"
#include "dkrn/random.hpp"
#include "dkrn/text_encoder.hpp"
#include "support.hpp"

using namespace dkrn;

namespace {

struct Fixture {
  std::vector<Conversation> convs;
  KeywordVocabulary vocab;
  KeywordGraph graph;

  explicit Fixture(std::size_t n = 40) {
    SyntheticConfig cfg;
    cfg.n_conversations = n;
    cfg.n_fillers = 12;
    auto syn = generate_synthetic_corpus(cfg);
    VocabularyRules rules;
    rules.min_frequency = 1;
    rules.content_lexicon = std::unordered_set<std::string>(syn.lexicon.begin(), syn.lexicon.end());
    vocab = build_vocabulary(syn.conversations, rules);
    convs = std::move(syn.conversations);
    annotate_keywords(convs, vocab);
    graph = build_graph(convs, vocab);
  }

  PredictorModel model(bool routing, std::size_t dim = 6) const {
    PredictorConfig pc;
    pc.embedding_dim = dim;
    pc.hidden_dim = dim;
    pc.routing_enabled = routing;
    pc.seed = 3;
    return PredictorModel(TokenVocabulary::build(convs, vocab), vocab.size(), pc);
  }
};

}  // namespace

TEST_CASE("routing keeps PASS logits and suppresses BLOCK logits") {
  Rng rng(1);
  std::vector<double> logits(1000), mask(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    logits[i] = uniform_real(rng, -20, 20);
    mask[i] = uniform_index(rng, 2) ? kMaskPass : kMaskBlock;
  }
  const auto p = apply_routing(logits, mask);
  for (std::size_t i = 0; i < 1000; ++i) {
    if (mask[i] == kMaskPass) {
      CHECK(std::abs(p[i] - 1.0 / (1.0 + std::exp(-logits[i]))) < 1e-12);
    } else {
      CHECK(p[i] < 1e-6);
    }
  }
}

TEST_CASE("context keywords come from the latest utterance, else the window") {
  std::vector<Utterance> h(3);
  h[0].keywords = {1};
  h[1].keywords = {2, 3};
  h[2].keywords = {4};
  CHECK(context_keywords(h, 2) == KeywordSet{4});
  h[2].keywords.clear();
  CHECK(context_keywords(h, 2) == KeywordSet{2, 3});
  CHECK(context_keywords(h, 3) == KeywordSet{1, 2, 3});
  CHECK(context_keywords(std::span<const Utterance>{}, 2).empty());
}

TEST_CASE("context ids join the window with separators and keep the tail") {
  const TokenVocabulary tv(std::vector<std::string>{"a", "b", "c"});
  const std::vector<Utterance> h{dkrn::test::make_utterance("a a"), dkrn::test::make_utterance("b"),
                                 dkrn::test::make_utterance("c a")};
  const auto a = tv.id("a"), b = tv.id("b"), c = tv.id("c");
  CHECK(context_ids(h, tv, 2, 60) == std::vector<std::size_t>{b, TokenVocabulary::kSep, c, a});
  CHECK(context_ids(h, tv, 3, 3) == std::vector<std::size_t>{TokenVocabulary::kSep, c, a});
  CHECK(tv.id("zzz") == TokenVocabulary::kUnk);
}

TEST_CASE("full predictor loss passes finite-difference checks") {
  const Fixture f;
  for (bool routing : {true, false}) {
    auto m = f.model(routing);
    const auto examples = turn_examples(f.convs, true);
    REQUIRE(examples.size() > 3);
    nn::GradCheckOptions opt;
    opt.max_components = 300;
    const auto report = nn::grad_check(
        [&](nn::Tape& t) {
          auto loss = m.example_loss(t, examples[0], routing ? &f.graph : nullptr);
          return nn::add(loss, m.example_loss(t, examples[3], routing ? &f.graph : nullptr));
        },
        m.parameters(), opt);
    INFO("routing " << routing << " worst " << report.worst << " rel " << report.max_rel_error << " analytic "
                    << report.worst_analytic << " numeric " << report.worst_numeric);
    CHECK(report.passed());
    CHECK(report.checked >= 200);
  }
}

TEST_CASE("blocked keywords carry no loss") {
  const Fixture f;
  auto m = f.model(true);
  const auto examples = turn_examples(f.convs, true);
  const auto& ex = examples[0];
  const auto mask = compute_mask(context_keywords(ex.history(), m.config().window), f.graph);
  std::size_t blocked = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k] != kMaskBlock) continue;
    ++blocked;
    nn::Tape t1;
    const double before = m.example_loss(t1, ex, &f.graph).item();
    m.fc2().bias.value[k] += 5.0;
    nn::Tape t2;
    const double after = m.example_loss(t2, ex, &f.graph).item();
    m.fc2().bias.value[k] -= 5.0;
    CHECK(before == after);
  }
  CHECK(blocked > 0);
}

TEST_CASE("predict combines logits and mask") {
  const Fixture f;
  const auto routed = f.model(true);
  const auto& conv = f.convs[0].utterances;
  const std::span<const Utterance> history(conv.data(), 1);
  const auto d = routed.predict(history, &f.graph);
  CHECK(d.mask == compute_mask(d.context, f.graph));
  CHECK(d.scores == apply_routing(d.logits, d.mask));
  CHECK(d.logits == routed.predict_raw(routed.encode_context(history)));

  nn::Tape t;
  auto mutable_model = routed;
  const auto h = mutable_model.encode_context(t, history);
  const auto fast = routed.encode_context(history);
  for (std::size_t i = 0; i < fast.size(); ++i) CHECK(h[i] == doctest::Approx(fast[i]).epsilon(1e-13));

  const auto plain = f.model(false);
  const auto e = plain.predict(history, &f.graph);
  CHECK(e.mask == std::vector<double>(f.vocab.size(), kMaskPass));
}

TEST_CASE("predictor checkpoints reproduce predictions") {
  dkrn::test::TempDir dir;
  const Fixture f;
  auto m = f.model(true);
  m.save(dir / "p.ckpt");
  const auto back = PredictorModel::load(dir / "p.ckpt");
  CHECK(back.routing_enabled());
  CHECK(back.num_keywords() == m.num_keywords());
  const auto& conv = f.convs[1].utterances;
  const std::span<const Utterance> history(conv.data(), 2);
  CHECK(back.predict(history, &f.graph).scores == m.predict(history, &f.graph).scores);
}

TEST_CASE("training lowers the loss and parallel evaluation matches serial") {
  const Fixture f(120);
  auto m = f.model(true, 12);
  TrainConfig tc;
  tc.epochs = 4;
  tc.lr = 1e-2;
  tc.lr_final = 1e-3;
  tc.batch_size = 8;
  const auto hist = train_predictor(m, f.convs, {}, &f.graph, tc);
  REQUIRE(hist.train_loss.size() == 4);
  CHECK(hist.train_loss.back() < hist.train_loss.front());
  const auto par = evaluate_keywords(m, f.convs, &f.graph);
  const auto ser = evaluate_keywords_serial(m, f.convs, &f.graph);
  CHECK(par.examples == ser.examples);
  CHECK(par.recall_at_1 == ser.recall_at_1);
  CHECK(par.recall_at_5 == ser.recall_at_5);
  CHECK(par.precision_at_1 == ser.precision_at_1);
}

TEST_CASE("PMI matches the smoothed joint table") {
  KeywordGraph g(4);
  g.add_edge(0, 1, 3);
  g.add_edge(0, 2, 1);
  g.add_edge(1, 2, 2);
  g.add_edge(3, 3, 1);
  const double alpha = 0.5;
  const PmiTable table(g, alpha);
  double joint[4][4], n = 0, out[4] = {}, in[4] = {};
  for (KeywordId a = 0; a < 4; ++a) {
    for (KeywordId b = 0; b < 4; ++b) {
      joint[a][b] = static_cast<double>(g.edge_count(a, b)) + alpha;
      n += joint[a][b];
      out[a] += joint[a][b];
      in[b] += joint[a][b];
    }
  }
  for (KeywordId a = 0; a < 4; ++a)
    for (KeywordId b = 0; b < 4; ++b)
      CHECK(table.score(a, b) == doctest::Approx(std::log(joint[a][b] * n / (out[a] * in[b]))).epsilon(1e-12));

  const auto s = predict_pmi({0, 1}, table);
  for (KeywordId b = 0; b < 4; ++b) CHECK(s[b] == std::max(table.score(0, b), table.score(1, b)));
  CHECK(predict_pmi({}, table) == std::vector<double>(4, 0.0));
  // The observed successor outranks unseen ones.
  const auto s0 = predict_pmi({0}, table);
  CHECK(s0[1] > s0[0]);
  CHECK(s0[1] > s0[3]);
}
