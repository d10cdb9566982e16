// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>

#include "dkrn/metrics.hpp"
#include "dkrn/random.hpp"
#include "support.hpp"

using namespace dkrn;

namespace {

// Top-k by repeated selection of the largest remaining score (lowest index on ties).
std::vector<std::size_t> top_k_by_selection(const std::vector<double>& s, std::size_t k) {
  std::vector<bool> used(s.size(), false);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < std::min(k, s.size()); ++r) {
    std::size_t best = s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (used[i]) continue;
      if (best == s.size() || s[i] > s[best]) best = i;
    }
    used[best] = true;
    out.push_back(best);
  }
  return out;
}

}  // namespace

TEST_CASE("ranking fixtures") {
  const std::vector<double> s{0.1, 0.9, 0.5, 0.9};
  CHECK(rank_order(s) == std::vector<std::size_t>{1, 3, 2, 0});
  CHECK(rank_of(s, 1) == 1);
  CHECK(rank_of(s, 3) == 2);
  CHECK(rank_of(s, 0) == 4);
}

TEST_CASE("keyword metric fixtures") {
  const std::vector<double> s{0.9, 0.1, 0.8, 0.3, 0.7, 0.2};
  CHECK(keyword_recall_at_k(s, {2, 5}, 1) == doctest::Approx(0.0));
  CHECK(keyword_recall_at_k(s, {2, 5}, 3) == doctest::Approx(0.5));
  CHECK(keyword_recall_at_k(s, {0, 2, 4, 3}, 3) == doctest::Approx(1.0));
  CHECK(keyword_recall_at_k(s, {0, 1}, 5) == doctest::Approx(0.5));
  CHECK(keyword_recall_at_k(s, {}, 3) == 0.0);
  CHECK(precision_at_1(s, {0}) == 1.0);
  CHECK(precision_at_1(s, {2, 4}) == 0.0);

  const auto m = keyword_metrics({s, s}, {{0}, {2}});
  CHECK(m.examples == 2);
  CHECK(m.recall_at_1 == doctest::Approx(0.5));
  CHECK(m.recall_at_3 == doctest::Approx(1.0));
  CHECK(m.precision_at_1 == doctest::Approx(0.5));
}

TEST_CASE("retrieval metric fixtures") {
  const std::vector<std::size_t> ranks{1, 2, 4};
  const auto m = retrieval_metrics(ranks);
  CHECK(m.mrr == doctest::Approx(0.5833333333333334).epsilon(1e-12));
  CHECK(std::abs(m.mrr - 7.0 / 12.0) < 1e-9);
  CHECK(m.recall_at_1 == doctest::Approx(1.0 / 3.0));
  CHECK(m.recall_at_3 == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall_at_5 == doctest::Approx(1.0));
  CHECK(m.examples == 3);
  CHECK(retrieval_metrics(std::vector<std::size_t>{}).examples == 0);
}

TEST_CASE("metrics agree with a selection-based reimplementation on random vectors") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 25);
    std::vector<double> s(n);
    // Coarse values force ties.
    for (auto& x : s) x = static_cast<double>(uniform_index(rng, 6)) / 5.0;
    KeywordSet gold;
    for (std::size_t g = 0, ng = uniform_index(rng, 4); g < ng; ++g) gold.insert(static_cast<KeywordId>(uniform_index(rng, n)));
    for (std::size_t k : {1, 3, 5}) {
      const auto top = top_k_by_selection(s, k);
      std::size_t hits = 0;
      for (auto i : top) hits += gold.count(static_cast<KeywordId>(i));
      const double expected = gold.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(std::min(gold.size(), k));
      CHECK(keyword_recall_at_k(s, gold, k) == doctest::Approx(expected));
    }
    const auto top1 = top_k_by_selection(s, 1)[0];
    CHECK(precision_at_1(s, gold) == (gold.count(static_cast<KeywordId>(top1)) ? 1.0 : 0.0));
    const std::size_t target = uniform_index(rng, n);
    const auto full = top_k_by_selection(s, n);
    CHECK(rank_of(s, target) == static_cast<std::size_t>(std::find(full.begin(), full.end(), target) - full.begin()) + 1);
  }
}

TEST_CASE("metrics report lines") {
  KeywordMetrics k;
  k.recall_at_1 = 0.25;
  k.examples = 4;
  const auto lines = to_lines("dkrn.", k);
  const auto text = format_metrics_report(lines);
  CHECK(text.find("dkrn.R_w@1\t0.250000\t4\n") != std::string::npos);
}
