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

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "tagforge/common.hpp"

namespace tagforge {

enum class Pos : std::uint8_t { kNoun, kAdj, kVerb, kAux, kDet, kPrep, kPron, kOther };

inline std::string_view to_string(Pos pos) {
  switch (pos) {
    case Pos::kNoun: return "NOUN";
    case Pos::kAdj: return "ADJ";
    case Pos::kVerb: return "VERB";
    case Pos::kAux: return "AUX";
    case Pos::kDet: return "DET";
    case Pos::kPrep: return "PREP";
    case Pos::kPron: return "PRON";
    case Pos::kOther: return "OTHER";
  }
  return "OTHER";
}

inline std::optional<Pos> pos_from_string(std::string_view s) {
  static const std::unordered_map<std::string_view, Pos> kByName = {
      {"NOUN", Pos::kNoun}, {"ADJ", Pos::kAdj},   {"VERB", Pos::kVerb},
      {"AUX", Pos::kAux},   {"DET", Pos::kDet},   {"PREP", Pos::kPrep},
      {"PRON", Pos::kPron}, {"OTHER", Pos::kOther}};
  auto it = kByName.find(s);
  if (it == kByName.end()) return std::nullopt;
  return it->second;
}

// Transparent hashing so lookups take string_view without allocating.
struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept {
    return std::hash<std::string_view>{}(s);
  }
};

using StringSet = std::unordered_set<std::string, StringHash, std::equal_to<>>;
template <typename V>
using StringMap = std::unordered_map<std::string, V, StringHash, std::equal_to<>>;

// Immutable word lists backing the caption parser. Keys are stored
// lowercased; all lookups expect lowercase input.
class LexiconBundle {
 public:
  static constexpr std::string_view kPosFile = "pos_lexicon.tsv";
  static constexpr std::string_view kLemmaFile = "lemma_exceptions.tsv";
  static constexpr std::string_view kStopwordFile = "stopwords.txt";

  LexiconBundle() = default;

  // Builds a bundle from in-memory file contents. Lines that are empty or
  // start with '#' are ignored.
  static LexiconBundle from_text(std::string_view pos_text,
                                 std::string_view lemma_text,
                                 std::string_view stopword_text);

  // Loads the three files from `dir`.
  static LexiconBundle load(const std::string& dir) {
    const std::string base = dir.empty() || dir.back() == '/' ? dir : dir + "/";
    return from_text(detail::read_file(base + std::string(kPosFile)),
                     detail::read_file(base + std::string(kLemmaFile)),
                     detail::read_file(base + std::string(kStopwordFile)));
  }

  std::optional<Pos> pos(std::string_view word) const {
    auto it = pos_.find(word);
    if (it == pos_.end()) return std::nullopt;
    return it->second;
  }

  const std::string* lemma_exception(std::string_view word) const {
    auto it = lemmas_.find(word);
    return it == lemmas_.end() ? nullptr : &it->second;
  }

  bool is_stopword(std::string_view word) const {
    return stopwords_.find(word) != stopwords_.end();
  }

  const StringMap<Pos>& pos_entries() const { return pos_; }
  const StringMap<std::string>& lemma_entries() const { return lemmas_; }
  const StringSet& stopwords() const { return stopwords_; }

 private:
  StringMap<Pos> pos_;
  StringMap<std::string> lemmas_;
  StringSet stopwords_;
};

namespace detail {

inline bool is_vowel(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

// "runn" -> "run", "stopp" -> "stop"; l, s, f and z doubles are kept
// ("fall", "kiss", "stuff", "buzz").
inline std::string undouble(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2]) {
    const char c = stem[n - 1];
    if (c >= 'a' && c <= 'z' && !is_vowel(c) && c != 'l' && c != 's' &&
        c != 'f' && c != 'z') {
      stem.pop_back();
    }
  }
  return stem;
}

inline bool ends_in_sibilant(std::string_view stem) {
  return ends_with(stem, "ss") || ends_with(stem, "x") || ends_with(stem, "z") ||
         ends_with(stem, "ch") || ends_with(stem, "sh");
}

}  // namespace detail

// Suffix-rule lemmatizer. The first matching rule wins:
//   exception list hit
//   -ies -> -y
//   -es  -> ""   stem of >= 3 chars ending in ss, x, z, ch or sh
//   -s   -> ""   not after another s
//   -ing -> ""   then undouble a final doubled consonant
//   -ed  -> ""   then undouble a final doubled consonant
// A rule whose stem would be shorter than 2 characters leaves the token as is.
inline std::string lemmatize(std::string_view token, const LexiconBundle& lex) {
  if (const std::string* hit = lex.lemma_exception(token)) return *hit;
  using detail::ends_with;
  const std::size_t n = token.size();
  if (ends_with(token, "ies")) {
    if (n - 3 < 1) return std::string(token);  // stem + "y" must be >= 2
    return std::string(token.substr(0, n - 3)) + "y";
  }
  if (ends_with(token, "es") && n - 2 >= 3 &&
      detail::ends_in_sibilant(token.substr(0, n - 2))) {
    return std::string(token.substr(0, n - 2));
  }
  if (ends_with(token, "s")) {
    if (ends_with(token, "ss") || n - 1 < 2) return std::string(token);
    return std::string(token.substr(0, n - 1));
  }
  if (ends_with(token, "ing")) {
    if (n - 3 < 2) return std::string(token);
    std::string stem = detail::undouble(std::string(token.substr(0, n - 3)));
    return stem.size() < 2 ? std::string(token) : stem;
  }
  if (ends_with(token, "ed")) {
    if (n - 2 < 2) return std::string(token);
    std::string stem = detail::undouble(std::string(token.substr(0, n - 2)));
    return stem.size() < 2 ? std::string(token) : stem;
  }
  return std::string(token);
}

inline LexiconBundle LexiconBundle::from_text(std::string_view pos_text,
                                              std::string_view lemma_text,
                                              std::string_view stopword_text) {
  LexiconBundle lex;
  auto skip = [](std::string_view line) {
    line = detail::trim(line);
    return line.empty() || line.front() == '#';
  };
  std::size_t line_no = 0;
  for (std::string_view line : detail::lines_of(pos_text)) {
    ++line_no;
    if (skip(line)) continue;
    const auto cols = detail::split(line, '\t');
    const std::string where = std::string(kPosFile) + ":" + std::to_string(line_no);
    if (cols.size() != 2) throw ValidationError(where, "expected word<TAB>POS");
    const auto tag = pos_from_string(detail::trim(cols[1]));
    if (!tag) throw ValidationError(where, "unknown POS '" + std::string(cols[1]) + "'");
    std::string word = detail::ascii_lower(detail::trim(cols[0]));
    if (!lex.pos_.emplace(word, *tag).second) {
      throw ValidationError(where, "duplicate word '" + word + "'");
    }
  }
  line_no = 0;
  for (std::string_view line : detail::lines_of(lemma_text)) {
    ++line_no;
    if (skip(line)) continue;
    const auto cols = detail::split(line, '\t');
    const std::string where = std::string(kLemmaFile) + ":" + std::to_string(line_no);
    if (cols.size() != 2) throw ValidationError(where, "expected inflected<TAB>lemma");
    std::string from = detail::ascii_lower(detail::trim(cols[0]));
    std::string to = detail::ascii_lower(detail::trim(cols[1]));
    if (from.empty() || to.empty()) throw ValidationError(where, "empty entry");
    if (!lex.lemmas_.emplace(std::move(from), std::move(to)).second) {
      throw ValidationError(where, "duplicate entry");
    }
  }
  for (std::string_view line : detail::lines_of(stopword_text)) {
    if (skip(line)) continue;
    lex.stopwords_.insert(detail::ascii_lower(detail::trim(line)));
  }
  for (const auto& [from, to] : lex.lemmas_) {
    if (lemmatize(to, lex) != to) {
      throw ValidationError(std::string(kLemmaFile),
                            "lemma '" + to + "' (from '" + from +
                                "') is not a fixed point of lemmatization");
    }
  }
  return lex;
}

}  // namespace tagforge
