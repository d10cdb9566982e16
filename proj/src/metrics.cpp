// SPDX-License-Identifier: Apache-2.0
#include "dkrn/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "dkrn/error.hpp"

namespace dkrn {

std::vector<std::size_t> rank_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  if (target >= scores.size()) throw Error("rank_of: target index out of range");
  // Items strictly better, plus equal items with a lower index.
  std::size_t better = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > scores[target] || (scores[i] == scores[target] && i < target)) ++better;
  }
  return better + 1;
}

double keyword_recall_at_k(std::span<const double> scores, const KeywordSet& gold, std::size_t k) {
  if (gold.empty() || k == 0) return 0.0;
  const auto order = rank_order(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
    if (gold.contains(static_cast<KeywordId>(order[i]))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::min(gold.size(), k));
}

double precision_at_1(std::span<const double> scores, const KeywordSet& gold) {
  if (scores.empty()) return 0.0;
  return gold.contains(static_cast<KeywordId>(rank_order(scores).front())) ? 1.0 : 0.0;
}

KeywordMetrics keyword_metrics(const std::vector<std::vector<double>>& scores, const std::vector<KeywordSet>& gold) {
  if (scores.size() != gold.size()) throw Error("keyword_metrics: scores and gold differ in length");
  KeywordMetrics m;
  m.examples = scores.size();
  if (m.examples == 0) return m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    m.recall_at_1 += keyword_recall_at_k(scores[i], gold[i], 1);
    m.recall_at_3 += keyword_recall_at_k(scores[i], gold[i], 3);
    m.recall_at_5 += keyword_recall_at_k(scores[i], gold[i], 5);
    m.precision_at_1 += precision_at_1(scores[i], gold[i]);
  }
  const double n = static_cast<double>(m.examples);
  m.recall_at_1 /= n;
  m.recall_at_3 /= n;
  m.recall_at_5 /= n;
  m.precision_at_1 /= n;
  return m;
}

RetrievalMetrics retrieval_metrics(std::span<const std::size_t> gold_ranks) {
  RetrievalMetrics m;
  m.examples = gold_ranks.size();
  if (m.examples == 0) return m;
  for (auto r : gold_ranks) {
    if (r == 0) throw Error("retrieval_metrics: ranks are 1-based");
    m.recall_at_1 += r <= 1 ? 1.0 : 0.0;
    m.recall_at_3 += r <= 3 ? 1.0 : 0.0;
    m.recall_at_5 += r <= 5 ? 1.0 : 0.0;
    m.mrr += 1.0 / static_cast<double>(r);
  }
  const double n = static_cast<double>(m.examples);
  m.recall_at_1 /= n;
  m.recall_at_3 /= n;
  m.recall_at_5 /= n;
  m.mrr /= n;
  return m;
}

std::string format_metrics_report(const std::vector<MetricLine>& lines) {
  std::string out;
  char buf[256];
  for (const auto& l : lines) {
    std::snprintf(buf, sizeof buf, "%s\t%.6f\t%zu\n", l.name.c_str(), l.value, l.count);
    out += buf;
  }
  return out;
}

void write_metrics_report(const std::filesystem::path& path, const std::vector<MetricLine>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report " + path.string());
  out << format_metrics_report(lines);
}

std::vector<MetricLine> to_lines(const std::string& prefix, const KeywordMetrics& m) {
  return {{prefix + "R_w@1", m.recall_at_1, m.examples},
          {prefix + "R_w@3", m.recall_at_3, m.examples},
          {prefix + "R_w@5", m.recall_at_5, m.examples},
          {prefix + "P@1", m.precision_at_1, m.examples}};
}

std::vector<MetricLine> to_lines(const std::string& prefix, const RetrievalMetrics& m) {
  return {{prefix + "R_20@1", m.recall_at_1, m.examples},
          {prefix + "R_20@3", m.recall_at_3, m.examples},
          {prefix + "R_20@5", m.recall_at_5, m.examples},
          {prefix + "MRR", m.mrr, m.examples}};
}

}  // namespace dkrn
