// SPDX-License-Identifier: Apache-2.0
#include "dkrn/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dkrn/error.hpp"

namespace dkrn {

namespace {

constexpr char kMagic[4] = {'D', 'K', 'R', 'E'};
constexpr std::uint32_t kVersion = 1;

bool parse_double(std::string_view s, double& out) {
  // from_chars for double is available in libstdc++ 11.
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t dim, OovPolicy policy) : dim_(dim), policy_(policy) {
  if (dim == 0) throw DataError("embedding dimension must be positive");
}

bool EmbeddingTable::add(std::string word, std::span<const double> v) {
  if (v.size() != dim_) {
    throw DataError("embedding for '" + word + "' has " + std::to_string(v.size()) +
                    " components, expected " + std::to_string(dim_));
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0) || !std::isfinite(norm)) return false;
  const auto [it, inserted] = index_.emplace(word, words_.size());
  if (!inserted) {
    // Later duplicates replace earlier ones.
    for (std::size_t d = 0; d < dim_; ++d) data_[it->second * dim_ + d] = v[d] / norm;
    return true;
  }
  words_.push_back(std::move(word));
  for (double x : v) data_.push_back(x / norm);
  return true;
}

bool EmbeddingTable::contains(std::string_view word) const { return index_of(word).has_value(); }

std::optional<std::size_t> EmbeddingTable::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::span<const double>> EmbeddingTable::lookup(std::string_view word) const {
  auto i = index_of(word);
  if (!i) return std::nullopt;
  return vector(*i);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings " + path.string());

  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      // word2vec-style "count dim" header.
      std::size_t a = 0, b = 0;
      if (fields.size() == 2 &&
          std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), a).ec == std::errc() &&
          std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), b).ec == std::errc()) {
        continue;
      }
    }
    if (fields.size() < 2) {
      ++table.malformed_;
      continue;
    }
    const std::size_t dim = fields.size() - 1;
    if (table.dim_ == 0) {
      if (expected_dim && *expected_dim != dim) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": dimension " +
                        std::to_string(dim) + " does not match expected " +
                        std::to_string(*expected_dim));
      }
      table.dim_ = dim;
    } else if (dim != table.dim_) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": dimension " +
                      std::to_string(dim) + " does not match " + std::to_string(table.dim_));
    }
    values.resize(dim);
    bool ok = true;
    for (std::size_t d = 0; d < dim && ok; ++d) ok = parse_double(fields[d + 1], values[d]);
    if (!ok || !table.add(std::string(fields[0]), values)) ++table.malformed_;
  }
  if (table.size() == 0) throw DataError("no embeddings loaded from " + path.string());
  return table;
}

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>& vectors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings " + path.string());
  char buf[64];
  for (const auto& [word, v] : vectors) {
    out << word;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, " %.17g", x);
      out << buf;
    }
    out << '\n';
  }
}

void EmbeddingTable::save_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding cache " + path.string());
  out.write(kMagic, 4);
  const auto dim = static_cast<std::uint32_t>(dim_);
  const auto count = static_cast<std::uint64_t>(words_.size());
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const auto len = static_cast<std::uint32_t>(words_[i].size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(words_[i].data(), len);
    out.write(reinterpret_cast<const char*>(data_.data() + i * dim_),
              static_cast<std::streamsize>(dim_ * sizeof(double)));
  }
}

EmbeddingTable EmbeddingTable::load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding cache " + path.string());
  char magic[4];
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not an embedding cache: " + path.string());
  if (version != kVersion) throw DataError("unsupported embedding cache version " + std::to_string(version));
  EmbeddingTable table(dim);
  std::vector<double> v(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string word(len, '\0');
    in.read(word.data(), len);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(double)));
    if (!in) throw DataError("truncated embedding cache " + path.string());
    // Stored vectors are already unit length; keep them bit-exact.
    if (!table.index_.emplace(word, table.words_.size()).second) throw DataError("duplicate word in cache: " + word);
    table.words_.push_back(std::move(word));
    table.data_.insert(table.data_.end(), v.begin(), v.end());
  }
  return table;
}

double closeness(std::string_view a, std::string_view b, const EmbeddingTable& table) {
  const auto va = table.lookup(a);
  const auto vb = table.lookup(b);
  if (!va || !vb) return 0.0;
  double dot = 0;
  for (std::size_t d = 0; d < table.dim(); ++d) dot += (*va)[d] * (*vb)[d];
  return dot;
}

std::vector<std::pair<std::string, double>> nearest(std::string_view word, std::size_t k,
                                                    const EmbeddingTable& table) {
  const auto q = table.index_of(word);
  if (!q || k == 0) return {};
  const auto qv = table.vector(*q);
  std::vector<std::pair<std::string, double>> all;
  all.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (i == *q) continue;
    const auto v = table.vector(i);
    double dot = 0;
    for (std::size_t d = 0; d < table.dim(); ++d) dot += qv[d] * v[d];
    all.emplace_back(table.word(i), dot);
  }
  const auto better = [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  };
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), better);
  all.resize(take);
  return all;
}

}  // namespace dkrn
