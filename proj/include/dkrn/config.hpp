// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dkrn {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Flat "key = value" file, UTF-8. Blank lines and lines starting with '#'
/// are skipped; a '#' after the value starts a comment. Throws ConfigError
/// naming the line for malformed or duplicate keys.
ConfigEntries parse_flat_config(std::string_view text, const std::string& source = "<config>");
ConfigEntries read_flat_config(const std::filesystem::path& path);

/// "lr-final" -> "DKRN_LR_FINAL".
std::string env_name(std::string_view key);

}  // namespace dkrn
