// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dkrn/agent.hpp"
#include "dkrn/error.hpp"
#include "dkrn/random.hpp"
#include "support.hpp"

using namespace dkrn;

namespace {

std::vector<std::size_t> whole_bank(const Experiment& ex) {
  std::vector<std::size_t> pool(ex.bank.utterances.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  return pool;
}

// First test utterance that does not already mention the target.
const Utterance& opening_for(const Experiment& ex, const TargetSpec& t) {
  for (const auto& u : ex.starts)
    if (!check_target_achieved(u, t)) return u;
  FAIL("no usable opening");
  return ex.starts.front();
}

TargetSpec target(const Experiment& ex, const std::string& word) {
  return TargetSpec::make(word, ex.vocab, ex.embeddings);
}

bool mentions(const Utterance& u, const std::string& word) {
  return std::find(u.tokens.begin(), u.tokens.end(), word) != u.tokens.end();
}

}  // namespace

TEST_CASE("variant names round-trip") {
  for (auto v : all_variants()) CHECK(parse_variant(to_string(v)) == v);
  CHECK(parse_variant("Retrieval_Stgy") == AgentVariant::retrieval_stgy);
  CHECK_FALSE(parse_variant("gpt").has_value());
}

TEST_CASE("the opening never counts as a turn") {
  const auto& ex = dkrn::test::small_experiment();
  const auto t = target(ex, "topic007");
  auto st = start_conversation(t, opening_for(ex, t), 4, whole_bank(ex));
  CHECK(st.turn_count == 0);
  CHECK(st.status == Status::ongoing);
  CHECK(st.utterances.size() == 1);
  CHECK_THROWS_AS(start_conversation(t, opening_for(ex, t), 0, whole_bank(ex)), ConfigError);

  auto direct = dkrn::test::make_utterance("topic007 please", ex.vocab);
  const auto done = start_conversation(t, direct, 4, whole_bank(ex));
  CHECK(done.status == Status::success);
  CHECK(done.turn_count == 0);
}

TEST_CASE("a user utterance with the target ends the conversation in success") {
  const auto& ex = dkrn::test::small_experiment();
  const auto t = target(ex, "topic008");
  auto st = start_conversation(t, opening_for(ex, t), 8, whole_bank(ex));
  append_user(st, dkrn::test::make_utterance("what about topic008", ex.vocab));
  CHECK(st.status == Status::success);
  Rng rng(1);
  CHECK_THROWS_AS(respond(st, AgentVariant::dkrn, ex.resources(), rng), StateError);
  CHECK_THROWS_AS(append_user(st, dkrn::test::make_utterance("more")), StateError);
  CHECK_THROWS_AS(append_agent(st, dkrn::test::make_utterance("more"), {}), StateError);
  close_exchange(st);
  CHECK(st.status == Status::success);
}

TEST_CASE("the turn budget ends an unsuccessful conversation in failure") {
  const auto& ex = dkrn::test::small_experiment();
  const auto t = target(ex, "topic009");
  auto st = start_conversation(t, opening_for(ex, t), 3, whole_bank(ex));
  const auto filler = dkrn::test::make_utterance("w001 w002", ex.vocab);
  for (int i = 0; i < 3; ++i) {
    CHECK(st.status == Status::ongoing);
    step_conversation(st, AgentReply{filler, {}}, filler);
  }
  CHECK(st.turn_count == 3);
  CHECK(st.status == Status::failure);
  CHECK(st.diagnostics.size() == 3);
  Rng rng(1);
  CHECK_THROWS_AS(respond(st, AgentVariant::retrieval, ex.resources(), rng), StateError);
}

TEST_CASE("success on the last turn is not overwritten") {
  const auto& ex = dkrn::test::small_experiment();
  const auto t = target(ex, "topic009");
  auto st = start_conversation(t, opening_for(ex, t), 1, whole_bank(ex));
  step_conversation(st, AgentReply{dkrn::test::make_utterance("topic009 then", ex.vocab), {}},
                    dkrn::test::make_utterance("ignored", ex.vocab));
  CHECK(st.status == Status::success);
  CHECK(st.utterances.size() == 2);
}

TEST_CASE("plain retrieval ignores the target") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  for (std::size_t i = 0; i < 10; ++i) {
    const auto a = target(ex, "topic002"), b = target(ex, "topic009");
    const auto& opening = ex.starts[i];
    if (check_target_achieved(opening, a) || check_target_achieved(opening, b)) continue;
    const auto sa = start_conversation(a, opening, 8, whole_bank(ex));
    const auto sb = start_conversation(b, opening, 8, whole_bank(ex));
    Rng ra(3), rb(3);
    const auto x = respond(sa, AgentVariant::retrieval, res, ra);
    const auto y = respond(sb, AgentVariant::retrieval, res, rb);
    CHECK(x.utterance.text == y.utterance.text);
    CHECK(x.diagnostics.response_rank == 0);
    CHECK_FALSE(x.diagnostics.predicted_keyword.has_value());
  }
}

TEST_CASE("keyword agents keep their choices inside the valid set") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  Rng pick(8);
  std::size_t checked = 0;
  for (auto variant : {AgentVariant::dkrn, AgentVariant::neural, AgentVariant::pmi, AgentVariant::retrieval_stgy}) {
    for (int episode = 0; episode < 6; ++episode) {
      const auto word = ex.vocab.word(static_cast<KeywordId>(uniform_index(pick, ex.vocab.size())));
      if (!ex.embeddings.contains(word)) continue;
      const auto t = target(ex, word);
      auto st = start_conversation(t, opening_for(ex, t), 6, whole_bank(ex));
      Rng rng(episode);
      while (st.status == Status::ongoing) {
        const double before = st.guidance.threshold;
        auto reply = respond(st, variant, res, rng);
        const auto& d = reply.diagnostics;
        CHECK(d.threshold_before == before);
        CHECK(d.threshold_after >= d.threshold_before);
        if (variant != AgentVariant::retrieval_stgy) {
          REQUIRE(d.predicted_keyword.has_value());
          const KeywordId k = *d.predicted_keyword;
          CHECK((k == t.keyword || t.closeness[k] > before));
          CHECK(d.predicted_closeness == t.closeness[k]);
          if (!d.response_relaxed) {
            bool ok = reply.utterance.keywords.count(k) > 0;
            for (auto q : reply.utterance.keywords) ok = ok || t.closeness[q] > d.predicted_closeness;
            CHECK(ok);
          }
        } else if (!d.response_relaxed) {
          bool ok = false;
          for (auto q : reply.utterance.keywords) ok = ok || q == t.keyword || t.closeness[q] > before;
          CHECK(ok);
        }
        CHECK(reply.utterance.speaker == Speaker::agent);
        step_conversation(st, reply, simulated_user_reply(st, res, st.pool, true));
        CHECK(st.guidance.threshold >= before);
        ++checked;
      }
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("respond leaves the state untouched and is reproducible") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources(ChooseMode::sample);
  const auto t = target(ex, "topic006");
  const auto st = start_conversation(t, opening_for(ex, t), 8, whole_bank(ex));
  Rng a(5), b(5);
  const auto x = respond(st, AgentVariant::dkrn, res, a);
  const auto y = respond(st, AgentVariant::dkrn, res, b);
  CHECK(x.utterance.text == y.utterance.text);
  CHECK(x.diagnostics.predicted_keyword == y.diagnostics.predicted_keyword);
  CHECK(st.utterances.size() == 1);
  CHECK(st.turn_count == 0);
}

TEST_CASE("the simulated user avoids repeats on request") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  const auto t = target(ex, "topic006");
  auto st = start_conversation(t, opening_for(ex, t), 8, whole_bank(ex));
  const auto first = simulated_user_reply(st, res, st.pool, false);
  CHECK(first.speaker == Speaker::user);
  append_user(st, first);
  if (st.status == Status::ongoing) {
    const auto again = simulated_user_reply(st, res, st.pool, true);
    CHECK(again.text != first.text);
  }
  CHECK_THROWS_AS(simulated_user_reply(st, res, {}, false), StateError);
}

TEST_CASE("missing resources are named") {
  const auto& ex = dkrn::test::small_experiment();
  AgentResources res = ex.resources();
  res.graph = nullptr;
  res.pmi = nullptr;
  try {
    res.require(AgentVariant::dkrn);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("keyword graph") != std::string::npos);
  }
  CHECK_THROWS_AS(res.require(AgentVariant::pmi), ConfigError);
  CHECK_NOTHROW(res.require(AgentVariant::neural));
  CHECK_NOTHROW(res.require(AgentVariant::retrieval));
}

TEST_CASE("transcripts carry utterances and one diagnostics entry per agent turn") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  const auto t = target(ex, "topic005");
  auto st = start_conversation(t, opening_for(ex, t), 2, whole_bank(ex));
  Rng rng(2);
  while (st.status == Status::ongoing) step_conversation(st, respond(st, AgentVariant::dkrn, res, rng),
                                                         simulated_user_reply(st, res, st.pool, false));
  const auto j = transcript_json(st, ex.vocab);
  CHECK(j["target"] == "topic005");
  CHECK(j["turns"] == st.turn_count);
  CHECK(j["utterances"].size() == st.utterances.size());
  CHECK(j["diagnostics"].size() == st.turn_count);
  const auto& d = j["diagnostics"][0];
  for (const char* key : {"turn", "variant", "context_keywords", "threshold_before", "threshold_after", "valid_size",
                          "predicted_keyword", "predicted_closeness", "keyword_fallback", "response_rank",
                          "response_relaxed", "top_keywords"})
    CHECK(d.contains(key));
  CHECK(d["variant"] == "dkrn");
  CHECK(d["top_keywords"].size() <= 10);
  CHECK((j["status"] == "success" || j["status"] == "failure"));
}

TEST_CASE("hand-built dialogue steers toward the closer keyword") {
  // book is the target; the user mentions movie.
  const KeywordVocabulary vocab({{"book", 3}, {"movie", 3}, {"paper", 3}, {"read", 3}, {"watch", 3}});
  const std::vector<double> closeness{1.0, 0.47, 0.68, 0.7, 0.6};
  EmbeddingTable emb(6);
  for (KeywordId k = 0; k < 5; ++k) {
    std::vector<double> v(6, 0.0);
    v[0] = closeness[k];
    if (k) v[k] = std::sqrt(1 - closeness[k] * closeness[k]);
    emb.add(vocab.word(k), v);
  }
  std::vector<Conversation> convs{
      dkrn::test::make_conversation("a", {"i saw a movie", "did you watch it", "i like to read"}),
      dkrn::test::make_conversation("b", {"a movie night", "read the paper", "the book was better"}),
      dkrn::test::make_conversation("c", {"movie time", "watch with me", "paper or book"}),
  };
  annotate_keywords(convs, vocab);
  KeywordGraph graph(5);
  graph.add_edge(1, 4, 1);
  graph.add_edge(1, 2, 1);
  graph.add_edge(1, 3, 1);
  const auto tokens = TokenVocabulary::build(convs, vocab);
  PredictorConfig pc;
  pc.embedding_dim = 4;
  pc.hidden_dim = 4;
  const PredictorModel predictor(tokens, vocab.size(), pc);
  RetrievalConfig rc;
  rc.hidden_dim = 4;
  const RetrievalModel retrieval(tokens, rc);
  auto bank = make_candidate_bank(flatten_utterances(convs), &retrieval, nullptr);

  AgentResources res;
  res.vocab = &vocab;
  res.embeddings = &emb;
  res.graph = &graph;
  res.dkrn = &predictor;
  res.retrieval_keyword = &retrieval;
  res.bank = &bank;

  const auto t = TargetSpec::make("book", vocab, emb);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < bank.utterances.size(); ++i)
    if (!bank.utterances[i].keywords.count(0)) pool.push_back(i);
  const auto st = start_conversation(t, dkrn::test::make_utterance("i love a good movie", vocab), 8, pool);
  CHECK(st.guidance.threshold == doctest::Approx(0.47));
  Rng rng(1);
  const auto reply = respond(st, AgentVariant::dkrn, res, rng);
  const auto& d = reply.diagnostics;
  REQUIRE(d.predicted_keyword.has_value());
  // Routing from movie admits paper, read and watch; all beat 0.47.
  CHECK((*d.predicted_keyword == 2 || *d.predicted_keyword == 3 || *d.predicted_keyword == 4));
  CHECK(d.valid_size == 4);
  CHECK_FALSE(d.response_relaxed);
  CHECK(d.threshold_after > 0.47);
  CHECK_FALSE(mentions(reply.utterance, "movie"));
}
