// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>

#include <fmt/format.h>

namespace mxsim {

ConfigError::ConfigError(std::string source, int line, std::string key, const std::string& message)
    : std::runtime_error(key.empty() ? fmt::format("{}:{}: {}", source, line, message)
                                     : fmt::format("{}:{}: key '{}': {}", source, line, key, message)),
      source_(std::move(source)),
      line_(line),
      key_(std::move(key)) {}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, std::string source) {
  KeyValueFile f;
  f.source_ = std::move(source);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    // Strip comments outside quotes.
    bool quoted = false;
    std::size_t cut = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') quoted = !quoted;
      if (raw[i] == '#' && !quoted) {
        cut = i;
        break;
      }
    }
    if (quoted) throw ConfigError(f.source_, line, "", "unterminated quote");
    const std::string_view text = trim(std::string_view(raw).substr(0, cut));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ConfigError(f.source_, line, "", "expected 'key = value'");
    ConfigEntry e;
    e.key = std::string(trim(text.substr(0, eq)));
    e.line = line;
    if (e.key.empty()) throw ConfigError(f.source_, line, "", "empty key");
    if (f.find(e.key)) throw ConfigError(f.source_, line, e.key, "duplicate key");
    std::string_view rest = trim(text.substr(eq + 1));
    if (rest.size() >= 2 && rest.front() == '[' && rest.back() == ']') rest = trim(rest.substr(1, rest.size() - 2));
    std::string cur;
    bool in_q = false;
    auto flush = [&] {
      std::string_view v = trim(cur);
      if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
      if (v.empty()) throw ConfigError(f.source_, line, e.key, "empty value");
      e.values.emplace_back(v);
      cur.clear();
    };
    for (char c : rest) {
      if (c == '"') in_q = !in_q;
      if (c == ',' && !in_q) {
        flush();
      } else {
        cur.push_back(c);
      }
    }
    flush();
    f.entries_.push_back(std::move(e));
  }
  return f;
}

KeyValueFile KeyValueFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "", "cannot open file");
  return parse(in, path);
}

const ConfigEntry* KeyValueFile::find(std::string_view key) const {
  const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.key == key; });
  return it == entries_.end() ? nullptr : &*it;
}

void KeyValueFile::require_known(const std::vector<std::string_view>& known) const {
  for (const auto& e : entries_) {
    if (std::find(known.begin(), known.end(), e.key) == known.end()) {
      std::string list;
      for (auto k : known) list += fmt::format("{}{}", list.empty() ? "" : ", ", k);
      throw ConfigError(source_, e.line, e.key, fmt::format("unknown key (valid: {})", list));
    }
  }
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "True" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "False" || s == "0" || s == "no") return false;
  throw std::invalid_argument(fmt::format("expected a boolean, got '{}'", s));
}

double parse_double(std::string_view s) {
  std::string tmp(s);
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(tmp, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tmp.size() || tmp.empty()) throw std::invalid_argument(fmt::format("expected a number, got '{}'", s));
  return v;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument(fmt::format("expected a non-negative integer, got '{}'", s));
  }
  return v;
}

}  // namespace mxsim
