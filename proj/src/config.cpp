// SPDX-License-Identifier: Apache-2.0
#include "dkrn/config.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "dkrn/error.hpp"

namespace dkrn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

ConfigEntries parse_flat_config(std::string_view text, const std::string& source) {
  ConfigEntries out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = source + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const auto key = std::string(trim(line.substr(0, eq)));
    const auto value = std::string(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    for (char c : key) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) {
        throw ConfigError(where + ": invalid key '" + key + "'");
      }
    }
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

ConfigEntries read_flat_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_flat_config(ss.str(), path.string());
}

std::string env_name(std::string_view key) {
  std::string out = "DKRN_";
  for (char c : key) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

}  // namespace dkrn
