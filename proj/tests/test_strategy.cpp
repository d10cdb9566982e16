// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dkrn/error.hpp"
#include "dkrn/random.hpp"
#include "dkrn/strategy.hpp"
#include "support.hpp"

using namespace dkrn;

namespace {

// Keyword ids: 0 book (target), 1 movie, 2 paper, 3 read, 4 watch.
TargetSpec book_target() {
  TargetSpec t;
  t.keyword = 0;
  t.word = "book";
  t.closeness = {1.0, 0.47, 0.68, 0.7, 0.6};
  return t;
}

TargetSpec random_target(Rng& rng, std::size_t n) {
  TargetSpec t;
  t.keyword = static_cast<KeywordId>(uniform_index(rng, n));
  t.word = "t";
  t.closeness.resize(n);
  for (auto& c : t.closeness) c = uniform_real(rng, -1, 0.95);
  t.closeness[t.keyword] = 1.0;
  return t;
}

}  // namespace

TEST_CASE("valid keywords are strictly closer than the threshold, plus the target") {
  const auto t = book_target();
  CHECK(valid_keywords(t, 0.47) == std::vector<KeywordId>{0, 2, 3, 4});
  CHECK(valid_keywords(t, 1.0) == std::vector<KeywordId>{0});
  CHECK(valid_keywords(t, 0.0) == std::vector<KeywordId>{0, 1, 2, 3, 4});
  CHECK(valid_keywords(t, 0.6) == std::vector<KeywordId>{0, 2, 3});
}

TEST_CASE("valid set shrinks as the threshold rises") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = random_target(rng, 12);
    double a = uniform_real(rng, -1, 1), b = uniform_real(rng, -1, 1);
    if (a > b) std::swap(a, b);
    const auto lo = valid_keywords(t, a), hi = valid_keywords(t, b);
    CHECK(std::includes(lo.begin(), lo.end(), hi.begin(), hi.end()));
    CHECK(std::find(hi.begin(), hi.end(), t.keyword) != hi.end());
  }
}

TEST_CASE("greedy choice is the restricted argmax") {
  const auto t = book_target();
  Rng rng(1);
  const auto valid = valid_keywords(t, 0.47);
  // Peak on the invalid "movie"; the best valid keyword is "paper".
  const std::vector<double> p{0.1, 0.9, 0.8, 0.3, 0.5};
  const auto c = choose_keyword(p, {}, valid, t, ChooseMode::greedy, rng);
  CHECK(c.keyword == 2);
  CHECK(c.fallback == KeywordFallback::none);
  const std::vector<double> tie{0.0, 0.0, 0.5, 0.5, 0.1};
  CHECK(choose_keyword(tie, {}, valid, t, ChooseMode::greedy, rng).keyword == 2);
}

TEST_CASE("fallbacks fire when every valid keyword is suppressed") {
  const auto t = book_target();
  Rng rng(1);
  const auto valid = valid_keywords(t, 0.47);
  const std::vector<double> p{1e-9, 0.9, 1e-12, 0.0, 1e-7};
  const std::vector<double> logits{-3.0, 5.0, 2.0, -1.0, 4.0};
  auto c = choose_keyword(p, logits, valid, t, ChooseMode::greedy, rng);
  CHECK(c.keyword == 4);
  CHECK(c.fallback == KeywordFallback::raw_logits);
  c = choose_keyword(p, {}, valid, t, ChooseMode::greedy, rng);
  CHECK(c.keyword == 0);
  CHECK(c.fallback == KeywordFallback::closeness);
  CHECK_THROWS(choose_keyword(p, {}, std::vector<KeywordId>{}, t, ChooseMode::greedy, rng));
}

TEST_CASE("sampled choice follows the restricted distribution") {
  const auto t = book_target();
  Rng rng(77);
  const auto valid = valid_keywords(t, 0.47);
  const std::vector<double> p{0.0, 0.9, 0.6, 0.3, 0.1};
  std::vector<int> counts(5, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[choose_keyword(p, {}, valid, t, ChooseMode::sample, rng).keyword];
  CHECK(counts[0] == 0);
  CHECK(counts[1] == 0);
  CHECK(counts[2] / double(n) == doctest::Approx(0.6).epsilon(0.05));
  CHECK(counts[3] / double(n) == doctest::Approx(0.3).epsilon(0.08));
  CHECK(counts[4] / double(n) == doctest::Approx(0.1).epsilon(0.15));
}

TEST_CASE("response choice takes the first candidate with the keyword or a closer one") {
  const auto t = book_target();
  const KeywordSet r1{1}, r2{4}, r3{3}, r4{2}, r5{};
  const std::vector<const KeywordSet*> ranked{&r1, &r2, &r3, &r4, &r5};
  // Predicted paper (0.68): rank 3 holds read (0.7), strictly closer.
  auto c = choose_response(ranked, KeywordId{2}, 0.68, t);
  CHECK(c.rank == 2);
  CHECK_FALSE(c.relaxed);
  c = choose_response(ranked, KeywordId{1}, 0.47, t);
  CHECK(c.rank == 0);
  c = choose_response(ranked, std::nullopt, 0.69, t);
  CHECK(c.rank == 2);
  const std::vector<const KeywordSet*> weak{&r1, &r5};
  c = choose_response(weak, KeywordId{3}, 0.7, t);
  CHECK(c.rank == 0);
  CHECK(c.relaxed);
}

TEST_CASE("response choice matches a brute-force scan") {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = random_target(rng, 8);
    std::vector<KeywordSet> sets(1 + uniform_index(rng, 6));
    for (auto& s : sets)
      for (std::size_t j = 0, m = uniform_index(rng, 3); j < m; ++j) s.insert(static_cast<KeywordId>(uniform_index(rng, 8)));
    std::vector<const KeywordSet*> ranked;
    for (const auto& s : sets) ranked.push_back(&s);
    const auto predicted = static_cast<KeywordId>(uniform_index(rng, 8));
    const double ref = t.closeness[predicted];
    std::optional<std::size_t> expected;
    for (std::size_t r = 0; r < sets.size() && !expected; ++r) {
      bool ok = sets[r].count(predicted) > 0;
      for (auto k : sets[r]) ok = ok || t.closeness[k] > ref;
      if (ok) expected = r;
    }
    const auto c = choose_response(ranked, predicted, ref, t);
    CHECK(c.rank == expected.value_or(0));
    CHECK(c.relaxed == !expected.has_value());
  }
}

TEST_CASE("target achievement by token or close keyword") {
  auto t = book_target();
  t.closeness.push_back(0.95);  // id 5: a near-synonym
  auto u = dkrn::test::make_utterance("i like the book");
  CHECK(check_target_achieved(u, t));
  u = dkrn::test::make_utterance("a paper to read");
  u.keywords = {2, 3};
  CHECK_FALSE(check_target_achieved(u, t));
  u.keywords = {5};
  CHECK(check_target_achieved(u, t));
  t.achieve_threshold = 0.96;
  CHECK_FALSE(check_target_achieved(u, t));
}

TEST_CASE("threshold is the running maximum") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_target(rng, 10);
    GuidanceState g;
    std::vector<KeywordSet> seen;
    for (std::size_t turn = 0; turn < 12; ++turn) {
      Utterance u;
      for (std::size_t j = 0, m = uniform_index(rng, 3); j < m; ++j) u.keywords.insert(static_cast<KeywordId>(uniform_index(rng, 10)));
      const double before = g.threshold;
      update_state(g, u, t, turn);
      seen.push_back(u.keywords);
      double expected = 0.0;
      for (const auto& s : seen)
        for (auto k : s) expected = std::max(expected, t.closeness[k]);
      CHECK(g.threshold == expected);
      CHECK(g.threshold >= before);
      CHECK(g.history.size() == turn + 1);
      if (u.keywords.empty()) CHECK_FALSE(g.history.back().keyword.has_value());
    }
  }
}

TEST_CASE("target construction validates the word") {
  const KeywordVocabulary v({{"book", 5}, {"read", 3}, {"lonely", 1}});
  EmbeddingTable e(2);
  e.add("book", std::vector<double>{1, 0});
  e.add("read", std::vector<double>{0.7, std::sqrt(1 - 0.49)});
  const auto t = TargetSpec::make("book", v, e);
  CHECK(t.keyword == 0);
  CHECK(t.closeness[1] == doctest::Approx(0.7));
  CHECK(t.closeness[2] == 0.0);
  CHECK_THROWS_AS(TargetSpec::make("nope", v, e), ConfigError);
  CHECK_THROWS_AS(TargetSpec::make("lonely", v, e), ConfigError);
}
