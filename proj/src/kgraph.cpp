// SPDX-License-Identifier: Apache-2.0
#include "dkrn/kgraph.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "dkrn/error.hpp"

namespace dkrn {

namespace {

constexpr char kMagic[4] = {'D', 'K', 'R', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated graph file " + path.string());
  return v;
}

}  // namespace

void KeywordGraph::add_edge(KeywordId from, KeywordId to, std::uint64_t count) {
  if (from >= size() || to >= size()) {
    throw DataError("edge " + std::to_string(from) + "->" + std::to_string(to) +
                    " outside graph of size " + std::to_string(size()));
  }
  auto& succ = successors_[from];
  auto it = std::lower_bound(succ.begin(), succ.end(), to);
  if (it == succ.end() || *it != to) succ.insert(it, to);
  counts_[{from, to}] += count;
}

std::uint64_t KeywordGraph::edge_count(KeywordId from, KeywordId to) const {
  auto it = counts_.find({from, to});
  return it == counts_.end() ? 0 : it->second;
}

std::size_t KeywordGraph::num_edges() const { return counts_.size(); }

bool KeywordGraph::has_inbound(KeywordId k) const {
  for (const auto& s : successors_) {
    if (std::binary_search(s.begin(), s.end(), k)) return true;
  }
  return false;
}

std::uint64_t KeywordGraph::out_total(KeywordId k) const {
  std::uint64_t total = 0;
  for (auto it = counts_.lower_bound({k, 0}); it != counts_.end() && it->first.first == k; ++it) {
    total += it->second;
  }
  return total;
}

std::uint64_t KeywordGraph::in_total(KeywordId k) const {
  std::uint64_t total = 0;
  for (const auto& [edge, c] : counts_) {
    if (edge.second == k) total += c;
  }
  return total;
}

std::uint64_t KeywordGraph::total_count() const {
  std::uint64_t total = 0;
  for (const auto& [edge, c] : counts_) total += c;
  return total;
}

void KeywordGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write graph " + path.string());
  out.write(kMagic, 4);
  put(out, kVersion);
  put(out, static_cast<std::uint32_t>(size()));
  for (KeywordId k = 0; k < size(); ++k) {
    put(out, static_cast<std::uint32_t>(successors_[k].size()));
    for (KeywordId s : successors_[k]) {
      put(out, static_cast<std::uint32_t>(s));
      put(out, edge_count(k, s));
    }
  }
}

KeywordGraph KeywordGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open graph " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError("bad graph header in " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw DataError("unsupported graph version " + std::to_string(version) + " in " + path.string());
  }
  const auto n = get<std::uint32_t>(in, path);
  KeywordGraph g(n);
  for (KeywordId k = 0; k < n; ++k) {
    const auto m = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < m; ++i) {
      const auto to = get<std::uint32_t>(in, path);
      const auto count = get<std::uint64_t>(in, path);
      g.add_edge(k, to, count);
    }
  }
  return g;
}

void KeywordGraph::export_edge_list(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write edge list " + path.string());
  for (const auto& [edge, c] : counts_) out << edge.first << '\t' << edge.second << '\t' << c << '\n';
}

KeywordGraph build_graph(const std::vector<Conversation>& conversations, const KeywordVocabulary& vocab) {
  KeywordGraph g(vocab.size());
  for (const auto& c : conversations) {
    for (std::size_t t = 0; t + 1 < c.utterances.size(); ++t) {
      for (KeywordId a : c.utterances[t].keywords) {
        for (KeywordId b : c.utterances[t + 1].keywords) g.add_edge(a, b);
      }
    }
  }
  return g;
}

KeywordSet routed_keywords(const KeywordSet& context_keywords, const KeywordGraph& graph) {
  KeywordSet routed;
  for (KeywordId s : context_keywords) {
    const auto& succ = graph.successors(s);
    routed.insert(succ.begin(), succ.end());
  }
  return routed;
}

std::vector<double> compute_mask(const KeywordSet& context_keywords, const KeywordGraph& graph) {
  const auto routed = routed_keywords(context_keywords, graph);
  if (routed.empty()) return std::vector<double>(graph.size(), kMaskPass);
  std::vector<double> mask(graph.size(), kMaskBlock);
  for (KeywordId k : routed) mask[k] = kMaskPass;
  return mask;
}

}  // namespace dkrn
