// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mxsim {

/// Error in a key/value config file; carries the offending line and key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, int line, std::string key, const std::string& message);
  const std::string& source() const { return source_; }
  int line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  std::string source_;
  int line_;
  std::string key_;
};

struct ConfigEntry {
  std::string key;
  std::vector<std::string> values;  // comma-separated list, quotes stripped
  int line = 0;
};

/// Parsed `key = value[, value...]` file. '#' starts a comment; values may be
/// double-quoted. A key may appear once.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, std::string source = "<config>");
  static KeyValueFile load(const std::string& path);

  const std::vector<ConfigEntry>& entries() const { return entries_; }
  const ConfigEntry* find(std::string_view key) const;
  const std::string& source() const { return source_; }

  /// Throws ConfigError naming the first key not in `known`.
  void require_known(const std::vector<std::string_view>& known) const;

 private:
  std::string source_;
  std::vector<ConfigEntry> entries_;
};

/// Converts every value of an entry, rethrowing conversion failures as
/// ConfigError with the entry's location.
template <typename T, typename Fn>
std::vector<T> convert_values(const KeyValueFile& file, const ConfigEntry& e, Fn&& fn) {
  std::vector<T> out;
  for (const auto& v : e.values) {
    try {
      out.push_back(fn(v));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError(file.source(), e.line, e.key, ex.what());
    }
  }
  return out;
}

bool parse_bool(std::string_view s);
double parse_double(std::string_view s);
std::uint64_t parse_u64(std::string_view s);

}  // namespace mxsim
