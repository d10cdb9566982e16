// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dkrn/nn/tape.hpp"

namespace dkrn::nn {

/// Versioned binary parameter file:
///   "DKRC", u32 version, string kind,
///   u32 n_meta, n_meta x (string key, string value),
///   u32 n_blocks, n_blocks x (string name, u32 rank, rank x u64 dim, doubles)
/// Strings are u32 length + bytes. Little-endian host layout.
struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::map<std::string, Parameter> blocks;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  /// Copies every block into params by name; shapes must match exactly and no
  /// parameter may be missing.
  void restore(const std::vector<Parameter*>& params) const;
  static Checkpoint capture(std::string kind, std::map<std::string, std::string> meta,
                            const std::vector<Parameter*>& params);

  const std::string& require_meta(const std::string& key) const;
};

/// Round-trippable text form of a double for checkpoint metadata.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace dkrn::nn
