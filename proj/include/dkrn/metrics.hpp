// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dkrn/corpus.hpp"

namespace dkrn {

/// Indices sorted by descending score; equal scores keep ascending index.
std::vector<std::size_t> rank_order(std::span<const double> scores);

/// 1-based rank of `target` under rank_order.
std::size_t rank_of(std::span<const double> scores, std::size_t target);

/// |gold ∩ top-k| / min(|gold|, k). Zero for an empty gold set.
double keyword_recall_at_k(std::span<const double> scores, const KeywordSet& gold, std::size_t k);

/// 1 when the top-ranked keyword is in gold.
double precision_at_1(std::span<const double> scores, const KeywordSet& gold);

struct KeywordMetrics {
  double recall_at_1 = 0;
  double recall_at_3 = 0;
  double recall_at_5 = 0;
  double precision_at_1 = 0;
  std::size_t examples = 0;
};

struct RetrievalMetrics {
  double recall_at_1 = 0;
  double recall_at_3 = 0;
  double recall_at_5 = 0;
  double mrr = 0;
  std::size_t examples = 0;
};

/// Per-example keyword scores, averaged in input order.
KeywordMetrics keyword_metrics(const std::vector<std::vector<double>>& scores, const std::vector<KeywordSet>& gold);

/// From the 1-based rank of the gold response in each example.
RetrievalMetrics retrieval_metrics(std::span<const std::size_t> gold_ranks);

struct MetricLine {
  std::string name;
  double value = 0;
  std::size_t count = 0;
};

/// "name<TAB>value<TAB>count" per line, values printed with %.6f.
std::string format_metrics_report(const std::vector<MetricLine>& lines);
void write_metrics_report(const std::filesystem::path& path, const std::vector<MetricLine>& lines);

std::vector<MetricLine> to_lines(const std::string& prefix, const KeywordMetrics& m);
std::vector<MetricLine> to_lines(const std::string& prefix, const RetrievalMetrics& m);

}  // namespace dkrn
