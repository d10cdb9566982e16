// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dkrn {

enum class OovPolicy { zero, random_unit };

/// Word vectors stored unit-normalized; immutable after loading.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim, OovPolicy policy = OovPolicy::zero);

  /// Normalizes and stores v. Returns false (and stores nothing) for a zero
  /// vector. Throws DataError on dimension mismatch.
  bool add(std::string word, std::span<const double> v);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  OovPolicy oov_policy() const { return policy_; }
  void set_oov_policy(OovPolicy p) { policy_ = p; }

  bool contains(std::string_view word) const;
  std::optional<std::size_t> index_of(std::string_view word) const;
  const std::string& word(std::size_t i) const { return words_[i]; }
  std::span<const double> vector(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  /// Vector for word, or nullopt if out of vocabulary.
  std::optional<std::span<const double>> lookup(std::string_view word) const;

  /// Number of lines skipped as malformed during the last load.
  std::size_t malformed_lines() const { return malformed_; }

  /// Optional binary cache: magic "DKRE", u32 version, u32 dim, u64 count,
  /// then per entry u32 length, bytes, dim doubles.
  void save_binary(const std::filesystem::path& path) const;
  static EmbeddingTable load_binary(const std::filesystem::path& path);

 private:
  friend EmbeddingTable load_embeddings(const std::filesystem::path&, std::optional<std::size_t>);

  std::size_t dim_ = 0;
  OovPolicy policy_ = OovPolicy::zero;
  std::vector<std::string> words_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t malformed_ = 0;
};

/// Text format: "word c1 c2 ... cd" per line. A two-integer first line
/// (word2vec header) is skipped. Lines whose numeric fields fail to parse, or
/// zero vectors, are counted as malformed and skipped; a line with a different
/// number of components is an error naming the line.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim = std::nullopt);

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>& vectors);

/// Cosine similarity of the stored unit vectors. OOV words give 0 under either
/// policy; random_unit only matters when initializing trainable matrices.
double closeness(std::string_view a, std::string_view b, const EmbeddingTable& table);

/// Top-k neighbours of word by closeness, descending, ties by word ascending;
/// the query itself is excluded. OOV query gives an empty list.
std::vector<std::pair<std::string, double>> nearest(std::string_view word, std::size_t k,
                                                    const EmbeddingTable& table);

}  // namespace dkrn
