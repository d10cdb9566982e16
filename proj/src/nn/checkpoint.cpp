// SPDX-License-Identifier: Apache-2.0
#include "dkrn/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "dkrn/error.hpp"

namespace dkrn::nn {

namespace {

constexpr char kMagic[4] = {'D', 'K', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 28)) throw DataError("corrupt checkpoint " + path_ + ": string length " + std::to_string(n));
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }
  void doubles(std::vector<double>& v) {
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    check();
  }

 private:
  void check() {
    if (!in_) throw DataError("truncated checkpoint " + path_);
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, 4);
  w.pod(kVersion);
  w.str(kind);
  w.pod(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.pod(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [name, p] : blocks) {
    w.str(name);
    w.pod(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.pod(static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint: " + path.string());
  Reader r(in, path.string());
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.kind = r.str();
  const auto n_meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    ck.meta[k] = r.str();
  }
  const auto n_blocks = r.pod<std::uint32_t>();
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    auto name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw DataError("corrupt checkpoint " + path.string() + ": rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>()));
    if (numel(shape) > (std::size_t{1} << 32)) throw DataError("corrupt checkpoint " + path.string());
    Parameter p(name, shape);
    r.doubles(p.value);
    ck.blocks.emplace(name, std::move(p));
  }
  return ck;
}

void Checkpoint::restore(const std::vector<Parameter*>& params) const {
  for (auto* p : params) {
    auto it = blocks.find(p->name);
    if (it == blocks.end()) throw DataError("checkpoint is missing parameter " + p->name);
    if (it->second.shape != p->shape) {
      throw DataError("checkpoint parameter " + p->name + " has shape " + shape_str(it->second.shape) +
                      ", model expects " + shape_str(p->shape));
    }
    p->value = it->second.value;
    p->zero_grad();
  }
}

Checkpoint Checkpoint::capture(std::string kind, std::map<std::string, std::string> meta,
                               const std::vector<Parameter*>& params) {
  Checkpoint ck;
  ck.kind = std::move(kind);
  ck.meta = std::move(meta);
  for (const auto* p : params) {
    Parameter copy(p->name, p->shape);
    copy.value = p->value;
    if (!ck.blocks.emplace(p->name, std::move(copy)).second) {
      throw Error("duplicate parameter name " + p->name);
    }
  }
  return ck;
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError("checkpoint (" + kind + ") lacks metadata key " + key);
  return it->second;
}

}  // namespace dkrn::nn
