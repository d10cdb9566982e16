// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "dkrn/error.hpp"
#include "dkrn/simulator.hpp"
#include "support.hpp"

using namespace dkrn;

namespace {

SelfPlayConfig config(AgentVariant v, std::size_t pool = 150) {
  SelfPlayConfig c;
  c.variant = v;
  c.pool_size = pool;
  return c;
}

EpisodeResult episode(bool success, std::size_t turns) {
  EpisodeResult e;
  e.success = success;
  e.turns = turns;
  return e;
}

}  // namespace

TEST_CASE("parallel batches match the serial reference episode by episode") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  for (auto v : all_variants()) {
    const auto par = run_batch(res, config(v), ex.starts, 12, 21);
    const auto ser = run_batch_serial(res, config(v), ex.starts, 12, 21);
    REQUIRE(par.episodes.size() == 12);
    CHECK(format_batch_report(par) == format_batch_report(ser));
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(par.episodes[i].episode == i);
      CHECK(par.episodes[i].transcript.utterances.size() == ser.episodes[i].transcript.utterances.size());
    }
  }
}

TEST_CASE("batches are reproducible and depend on the seed") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  const auto a = format_batch_report(run_batch(res, config(AgentVariant::dkrn), ex.starts, 16, 3));
  const auto b = format_batch_report(run_batch(res, config(AgentVariant::dkrn), ex.starts, 16, 3));
  const auto c = format_batch_report(run_batch(res, config(AgentVariant::dkrn), ex.starts, 16, 4));
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("episodes respect the turn budget and report consistent outcomes") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  auto cfg = config(AgentVariant::retrieval_stgy);
  cfg.max_turns = 4;
  const auto r = run_batch(res, cfg, ex.starts, 20, 9);
  for (const auto& e : r.episodes) {
    CHECK(e.turns >= 1);
    CHECK(e.turns <= 4);
    CHECK(e.transcript.turn_count == e.turns);
    CHECK(e.success == (e.transcript.status == Status::success));
    CHECK(e.target == e.transcript.target.word);
    if (!e.success) CHECK(e.turns == 4);
    // The opening never already reaches the target.
    CHECK_FALSE(check_target_achieved(e.transcript.utterances.front(), e.transcript.target));
  }
}

TEST_CASE("aggregate fixtures") {
  BatchReport r;
  r.episodes = {episode(true, 2), episode(false, 8), episode(true, 4), episode(false, 8)};
  aggregate(r);
  CHECK(r.successes == 2);
  CHECK(r.success_rate == 0.5);
  CHECK(r.mean_turns_success == 3.0);
  CHECK(r.mean_turns_all == 5.5);
  std::swap(r.episodes[0], r.episodes[3]);
  aggregate(r);
  CHECK(r.mean_turns_success == 3.0);

  BatchReport none;
  none.episodes = {episode(false, 8)};
  aggregate(none);
  CHECK(none.success_rate == 0.0);
  CHECK(none.mean_turns_success == 0.0);
  BatchReport empty;
  aggregate(empty);
  CHECK(empty.mean_turns_all == 0.0);
}

TEST_CASE("report and table formats") {
  BatchReport r;
  r.variant = AgentVariant::retrieval_stgy;
  r.seed = 5;
  r.max_turns = 8;
  r.excluded_targets = 1;
  auto e = episode(true, 3);
  e.seed = 77;
  e.target = "topic004";
  r.episodes = {e};
  aggregate(r);
  CHECK(format_batch_report(r) ==
        "# selfplay variant=retrieval-stgy seed=5 episodes=1 max_turns=8 excluded_targets=1\n"
        "episode\tseed\ttarget\tsuccess\tturns\n"
        "0\t77\ttopic004\t1\t3\n"
        "# aggregate\nepisodes\t1\nsuccesses\t1\nsuccess_rate\t1.000000\nmean_turns_success\t3.000000\n"
        "mean_turns_all\t3.000000\n");
  CHECK(format_selfplay_table({r}) ==
        "system\tSucc.(%)\t#Turns\t#Turns(all)\tepisodes\nretrieval-stgy\t100.00\t3.00\t3.00\t1\n");
}

TEST_CASE("target eligibility excludes keywords without inbound edges") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  const auto routed = eligible_targets(res, false);
  const auto all = eligible_targets(res, true);
  CHECK(routed.keywords.size() + routed.excluded == ex.vocab.size());
  CHECK(all.keywords.size() + all.excluded == ex.vocab.size());
  CHECK(all.keywords.size() >= routed.keywords.size());
  for (auto k : routed.keywords) {
    CHECK(ex.graph.has_inbound(k));
    CHECK(ex.embeddings.contains(ex.vocab.word(k)));
  }
  // The first planted keyword starts every chain and is never a successor.
  const auto first = ex.vocab.find(ex.synthetic.keywords.front());
  REQUIRE(first.has_value());
  if (!ex.graph.has_inbound(*first)) {
    CHECK(std::find(routed.keywords.begin(), routed.keywords.end(), *first) == routed.keywords.end());
    CHECK(std::find(all.keywords.begin(), all.keywords.end(), *first) != all.keywords.end());
  }
  AgentResources bare = res;
  bare.graph = nullptr;
  CHECK_THROWS_AS(eligible_targets(bare, false), ConfigError);
  CHECK_NOTHROW(eligible_targets(bare, true));
}

TEST_CASE("batch inputs are validated") {
  const auto& ex = dkrn::test::small_experiment();
  const auto res = ex.resources();
  CHECK(run_batch(res, config(AgentVariant::dkrn), {}, 0, 1).episodes.empty());
  CHECK_THROWS_AS(run_batch(res, config(AgentVariant::dkrn), {}, 3, 1), DataError);
  AgentResources missing = res;
  missing.neural = nullptr;
  CHECK_THROWS_AS(run_batch(missing, config(AgentVariant::neural), ex.starts, 3, 1), ConfigError);
}
