/*
 * Copyright 2026 The TagForge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/common.hpp"

namespace tagforge {

// `key = value` lines; '#' starts a comment line. Later set() calls (CLI
// flags) override file values.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& origin = "config") {
    KeyValueConfig cfg;
    std::size_t n = 0;
    for (std::string_view line : detail::lines_of(text)) {
      ++n;
      line = detail::trim(line);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      const std::string where = origin + " line " + std::to_string(n);
      if (eq == std::string_view::npos) throw ValidationError(where, "expected key = value");
      std::string key(detail::trim(line.substr(0, eq)));
      std::string value(detail::trim(line.substr(eq + 1)));
      if (key.empty()) throw ValidationError(where, "empty key");
      if (cfg.values_.count(key)) throw ValidationError(key, "set twice in " + origin);
      cfg.values_[key] = std::move(value);
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    return parse(detail::read_file(path), path);
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::optional<std::string> get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) return std::nullopt;
    return it->second;
  }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ValidationError(key, "required key is missing");
    return *v;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  double get_double(const std::string& key, double fallback, double lo, double hi) const {
    auto v = get(key);
    const double x = v ? detail::parse_double(*v, key) : fallback;
    if (!std::isfinite(x) || x < lo || x > hi) {
      throw ValidationError(key, "value " + detail::format_double(x) + " outside [" +
                                     detail::format_double(lo) + ", " + detail::format_double(hi) + "]");
    }
    return x;
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback, std::uint64_t lo,
                         std::uint64_t hi) const {
    auto v = get(key);
    std::uint64_t x = fallback;
    if (v) {
      std::string_view s = detail::trim(*v);
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
      if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ValidationError(key, "not a non-negative integer: '" + *v + "'");
      }
    }
    if (x < lo || x > hi) {
      throw ValidationError(key, "value " + std::to_string(x) + " outside [" + std::to_string(lo) +
                                     ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    const std::string s = detail::ascii_lower(*v);
    if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "off" || s == "no") return false;
    throw ValidationError(key, "expected on/off, got '" + *v + "'");
  }

  // Comma-separated list of non-empty items.
  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    if (auto v = get(key)) {
      for (std::string_view item : detail::split(*v, ',')) {
        item = detail::trim(item);
        if (!item.empty()) out.emplace_back(item);
      }
    }
    return out;
  }

  std::optional<std::string> get_existing_path(const std::string& key) const {
    auto v = get(key);
    if (v && !std::filesystem::exists(*v)) throw ValidationError(key, "no such file: " + *v);
    return v;
  }

 private:
  std::map<std::string, std::string> values_;
};

#ifndef TAGFORGE_DEFAULT_DATA_DIR
#define TAGFORGE_DEFAULT_DATA_DIR "data"
#endif

// Lexicon directory: an explicit value, else $TAGFORGE_DATA_DIR, else the
// directory baked in at build time.
inline std::string resolve_data_dir(const std::optional<std::string>& explicit_dir) {
  if (explicit_dir && !explicit_dir->empty()) return *explicit_dir;
  if (const char* env = std::getenv("TAGFORGE_DATA_DIR"); env && *env) return env;
  return TAGFORGE_DEFAULT_DATA_DIR;
}

}  // namespace tagforge
