// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "dkrn/corpus.hpp"

namespace dkrn {

/// Additive mask values applied to keyword logits.
inline constexpr double kMaskPass = 1.0;
inline constexpr double kMaskBlock = -1e8;

/// Directed keyword transition graph built from consecutive utterances.
class KeywordGraph {
 public:
  KeywordGraph() = default;
  explicit KeywordGraph(std::size_t n) : successors_(n) {}

  std::size_t size() const { return successors_.size(); }
  void add_edge(KeywordId from, KeywordId to, std::uint64_t count = 1);

  /// Sorted successor ids of a keyword.
  const std::vector<KeywordId>& successors(KeywordId k) const { return successors_.at(k); }
  std::uint64_t edge_count(KeywordId from, KeywordId to) const;
  std::size_t num_edges() const;
  /// True when some edge points at k.
  bool has_inbound(KeywordId k) const;

  const std::map<std::pair<KeywordId, KeywordId>, std::uint64_t>& edge_counts() const {
    return counts_;
  }

  /// Out-degree and in-degree totals of the counts (used by PMI).
  std::uint64_t out_total(KeywordId k) const;
  std::uint64_t in_total(KeywordId k) const;
  std::uint64_t total_count() const;

  bool operator==(const KeywordGraph& other) const {
    return successors_ == other.successors_ && counts_ == other.counts_;
  }

  /// Binary file: magic "DKRG", u32 version, u32 n, then per node a u32
  /// successor count followed by (u32 id, u64 count) pairs.
  void save(const std::filesystem::path& path) const;
  static KeywordGraph load(const std::filesystem::path& path);

  /// "from_id<TAB>to_id<TAB>count" per edge.
  void export_edge_list(const std::filesystem::path& path) const;

 private:
  std::vector<std::vector<KeywordId>> successors_;
  std::map<std::pair<KeywordId, KeywordId>, std::uint64_t> counts_;
};

/// Adds an edge a -> b for every a in keywords(u_t), b in keywords(u_{t+1})
/// over all consecutive utterance pairs; speaker labels are ignored.
KeywordGraph build_graph(const std::vector<Conversation>& conversations, const KeywordVocabulary& vocab);

/// PASS at every successor of the context keywords, BLOCK elsewhere. An
/// empty context or empty successor set gives the all-PASS mask.
std::vector<double> compute_mask(const KeywordSet& context_keywords, const KeywordGraph& graph);

/// Successor union R_t of the context keywords.
KeywordSet routed_keywords(const KeywordSet& context_keywords, const KeywordGraph& graph);

}  // namespace dkrn
