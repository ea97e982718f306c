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

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tagforge/common.hpp"
#include "tagforge/lexicon.hpp"
#include "tagforge/parallel.hpp"

namespace tagforge {

struct CaptionRecord {
  std::string image_id;
  std::string caption;
  std::string source;
};

enum class TagKind : std::uint8_t { kObject, kAttribute, kAction };

inline std::string_view to_string(TagKind kind) {
  switch (kind) {
    case TagKind::kObject: return "object";
    case TagKind::kAttribute: return "attribute";
    case TagKind::kAction: return "action";
  }
  return "object";
}

inline std::optional<TagKind> tag_kind_from_string(std::string_view s) {
  if (s == "object") return TagKind::kObject;
  if (s == "attribute") return TagKind::kAttribute;
  if (s == "action") return TagKind::kAction;
  return std::nullopt;
}

struct ParsedTag {
  std::string surface;
  TagKind kind = TagKind::kObject;

  friend bool operator==(const ParsedTag&, const ParsedTag&) = default;
  friend auto operator<=>(const ParsedTag&, const ParsedTag&) = default;
};

struct Token {
  std::string lemma;
  Pos pos = Pos::kOther;
  bool stop = false;
};

namespace detail {

inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
}

inline bool has_letter(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) {
    return (c >= 'a' && c <= 'z') || c >= 0x80;
  });
}

}  // namespace detail

// Lowercases, turns every punctuation byte into a separator except a hyphen
// or apostrophe with word characters on both sides, and splits on
// whitespace. A trailing possessive "'s" is dropped. Bytes >= 0x80 are word
// characters, so UTF-8 sequences pass through intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::string norm = detail::ascii_lower(text);
  for (std::size_t i = 0; i < norm.size(); ++i) {
    const auto c = static_cast<unsigned char>(norm[i]);
    if (detail::is_word_byte(c)) continue;
    if ((c == '-' || c == '\'') && i > 0 && i + 1 < norm.size() &&
        detail::is_word_byte(static_cast<unsigned char>(norm[i - 1])) &&
        detail::is_word_byte(static_cast<unsigned char>(norm[i + 1]))) {
      continue;
    }
    norm[i] = ' ';
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < norm.size()) {
    while (i < norm.size() && norm[i] == ' ') ++i;
    std::size_t j = i;
    while (j < norm.size() && norm[j] != ' ') ++j;
    if (j > i) {
      std::string_view tok(norm.data() + i, j - i);
      if (tok.size() > 2 && detail::ends_with(tok, "'s")) tok.remove_suffix(2);
      tokens.emplace_back(tok);
    }
    i = j;
  }
  return tokens;
}

// Lemma, POS and stopword status for each token. POS is looked up for the
// raw token first, then its lemma; unknown words are NOUN, and tokens with
// no letters (numerals) are OTHER.
inline std::vector<Token> tag_tokens(const std::vector<std::string>& raw,
                                     const LexiconBundle& lex) {
  std::vector<Token> out;
  out.reserve(raw.size());
  for (const std::string& word : raw) {
    Token tok;
    tok.lemma = lemmatize(word, lex);
    tok.stop = lex.is_stopword(word) || lex.is_stopword(tok.lemma);
    if (auto p = lex.pos(word)) {
      tok.pos = *p;
    } else if (auto q = lex.pos(tok.lemma)) {
      tok.pos = *q;
    } else {
      tok.pos = detail::has_letter(word) ? Pos::kNoun : Pos::kOther;
    }
    out.push_back(std::move(tok));
  }
  return out;
}

// Emits tags grouped by kind: objects (per chunk, NOUN-NOUN compounds then
// single nouns), then attributes (adjectives inside chunks), then actions
// (verbs anywhere). A chunk is a maximal ADJ* NOUN+ run of non-stopword
// tokens. Duplicates by (surface, kind) keep their first occurrence.
inline std::vector<ParsedTag> parse_tokens(const std::vector<Token>& toks) {
  std::vector<ParsedTag> objects;
  std::vector<ParsedTag> attributes;
  std::vector<ParsedTag> actions;
  auto is = [&](std::size_t i, Pos p) {
    return i < toks.size() && !toks[i].stop && toks[i].pos == p;
  };
  std::size_t i = 0;
  while (i < toks.size()) {
    if (!is(i, Pos::kAdj) && !is(i, Pos::kNoun)) {
      if (is(i, Pos::kVerb)) actions.push_back({toks[i].lemma, TagKind::kAction});
      ++i;
      continue;
    }
    const std::size_t adj_begin = i;
    while (is(i, Pos::kAdj)) ++i;
    const std::size_t noun_begin = i;
    while (is(i, Pos::kNoun)) ++i;
    if (i == noun_begin) continue;  // adjectives without a noun
    for (std::size_t n = noun_begin; n + 1 < i; ++n) {
      objects.push_back({toks[n].lemma + " " + toks[n + 1].lemma, TagKind::kObject});
    }
    for (std::size_t n = noun_begin; n < i; ++n) {
      objects.push_back({toks[n].lemma, TagKind::kObject});
    }
    for (std::size_t a = adj_begin; a < noun_begin; ++a) {
      attributes.push_back({toks[a].lemma, TagKind::kAttribute});
    }
  }
  std::vector<ParsedTag> out;
  out.reserve(objects.size() + attributes.size() + actions.size());
  std::set<std::pair<std::string_view, TagKind>> seen;
  for (const auto* group : {&objects, &attributes, &actions}) {
    for (const ParsedTag& tag : *group) {
      if (seen.emplace(tag.surface, tag.kind).second) out.push_back(tag);
    }
  }
  return out;
}

inline std::vector<ParsedTag> parse_caption(std::string_view caption,
                                            const LexiconBundle& lex) {
  return parse_tokens(tag_tokens(tokenize(caption), lex));
}

inline std::vector<ParsedTag> parse_caption(const CaptionRecord& record,
                                            const LexiconBundle& lex) {
  return parse_caption(record.caption, lex);
}

// ---------------------------------------------------------------------------
// Corpus parsing

struct ImageTags {
  std::string image_id;
  std::vector<ParsedTag> tags;
};

struct Reject {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

using FrequencyTable = std::vector<std::pair<std::string, std::uint64_t>>;

struct CorpusResult {
  std::vector<ImageTags> images;  // sorted by image_id
  FrequencyTable frequency;       // count descending, ties lexicographic
  std::vector<Reject> rejects;    // ascending line order
  std::size_t records = 0;        // accepted caption records
};

// Decodes one JSONL caption line. Returns false with `reason` set on a
// malformed record.
inline bool decode_caption_line(std::string_view line, CaptionRecord& out,
                                std::string& reason) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    reason = "invalid JSON object";
    return false;
  }
  auto id = j.find("image_id");
  if (id == j.end() || !id->is_string() || id->get_ref<const std::string&>().empty()) {
    reason = "missing or empty image_id";
    return false;
  }
  auto cap = j.find("caption");
  if (cap == j.end() || !cap->is_string()) {
    reason = "missing caption";
    return false;
  }
  out.image_id = id->get<std::string>();
  out.caption = cap->get<std::string>();
  auto src = j.find("source");
  out.source = (src != j.end() && src->is_string()) ? src->get<std::string>() : "";
  return true;
}

inline void sort_frequency(FrequencyTable& table) {
  std::sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
}

// Per-image union of caption tags plus the image-level frequency table.
// Captions of one image are combined in (source, caption) order, so neither
// input order nor shard boundaries affect the output.
inline CorpusResult parse_corpus(std::string_view jsonl, const LexiconBundle& lex,
                                 std::size_t workers = 1) {
  struct Parsed {
    std::size_t line;
    CaptionRecord record;
    std::vector<ParsedTag> tags;
  };
  const std::vector<std::string_view> lines = detail::lines_of(jsonl);
  const std::size_t shard_count = std::max<std::size_t>(1, std::min<std::size_t>(
      lines.size() / 4096 + 1, std::max<std::size_t>(workers, 1) * 4));
  const std::size_t per_shard = (lines.size() + shard_count - 1) / shard_count;
  std::vector<std::vector<Parsed>> shard_parsed(shard_count);
  std::vector<std::vector<Reject>> shard_rejects(shard_count);
  parallel_for(shard_count, workers, [&](std::size_t s) {
    const std::size_t begin = s * per_shard;
    const std::size_t end = std::min(lines.size(), begin + per_shard);
    std::string reason;
    for (std::size_t i = begin; i < end; ++i) {
      if (detail::trim(lines[i]).empty()) continue;
      Parsed p;
      p.line = i + 1;
      if (!decode_caption_line(lines[i], p.record, reason)) {
        shard_rejects[s].push_back({i + 1, reason});
        continue;
      }
      p.tags = parse_caption(p.record, lex);
      shard_parsed[s].push_back(std::move(p));
    }
  });

  CorpusResult result;
  std::map<std::string, std::vector<const Parsed*>> by_image;
  for (const auto& shard : shard_parsed) {
    for (const Parsed& p : shard) by_image[p.record.image_id].push_back(&p);
    result.records += shard.size();
  }
  for (auto& shard : shard_rejects) {
    for (auto& r : shard) result.rejects.push_back(std::move(r));
  }

  StringMap<std::uint64_t> counts;
  result.images.reserve(by_image.size());
  for (auto& [image_id, caps] : by_image) {
    std::sort(caps.begin(), caps.end(), [](const Parsed* a, const Parsed* b) {
      return std::tie(a->record.source, a->record.caption) <
             std::tie(b->record.source, b->record.caption);
    });
    ImageTags img{image_id, {}};
    std::set<std::pair<std::string_view, TagKind>> seen;
    std::set<std::string_view> surfaces;
    for (const Parsed* p : caps) {
      for (const ParsedTag& tag : p->tags) {
        if (seen.emplace(tag.surface, tag.kind).second) img.tags.push_back(tag);
      }
    }
    for (const ParsedTag& tag : img.tags) surfaces.insert(tag.surface);
    for (std::string_view s : surfaces) {
      auto it = counts.find(s);
      if (it == counts.end()) {
        counts.emplace(std::string(s), 1);
      } else {
        ++it->second;
      }
    }
    result.images.push_back(std::move(img));
  }
  result.frequency.assign(counts.begin(), counts.end());
  sort_frequency(result.frequency);
  return result;
}

// {"image_id": ..., "tags": [{"surface": ..., "kind": ...}]} per line.
inline std::string format_image_tags_jsonl(const std::vector<ImageTags>& images) {
  std::string out;
  for (const ImageTags& img : images) {
    nlohmann::ordered_json j;
    j["image_id"] = img.image_id;
    j["tags"] = nlohmann::ordered_json::array();
    for (const ParsedTag& tag : img.tags) {
      nlohmann::ordered_json t;
      t["surface"] = tag.surface;
      t["kind"] = std::string(to_string(tag.kind));
      j["tags"].push_back(std::move(t));
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ImageTags> read_image_tags_jsonl(std::string_view text) {
  std::vector<ImageTags> out;
  std::size_t line_no = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::string where = "parsed tags line " + std::to_string(line_no);
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("image_id") ||
        !j["image_id"].is_string() || !j.contains("tags") || !j["tags"].is_array()) {
      throw ValidationError(where, "expected {\"image_id\", \"tags\"}");
    }
    ImageTags img{j["image_id"].get<std::string>(), {}};
    for (const auto& t : j["tags"]) {
      if (!t.is_object() || !t.contains("surface") || !t["surface"].is_string()) {
        throw ValidationError(where, "tag without surface");
      }
      TagKind kind = TagKind::kObject;
      if (t.contains("kind")) {
        auto k = t["kind"].is_string() ? tag_kind_from_string(t["kind"].get<std::string>())
                                       : std::nullopt;
        if (!k) throw ValidationError(where, "bad tag kind");
        kind = *k;
      }
      img.tags.push_back({t["surface"].get<std::string>(), kind});
    }
    out.push_back(std::move(img));
  }
  return out;
}

// surface<TAB>count, count descending, ties lexicographic.
inline std::string format_frequency_tsv(const FrequencyTable& table) {
  std::string out;
  for (const auto& [surface, count] : table) {
    out += surface;
    out += '\t';
    out += std::to_string(count);
    out += '\n';
  }
  return out;
}

inline FrequencyTable read_frequency_tsv(std::string_view text) {
  FrequencyTable table;
  std::size_t line_no = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++line_no;
    if (detail::trim(line).empty() || line.front() == '#') continue;
    const auto cols = detail::split(line, '\t');
    const std::string where = "frequency line " + std::to_string(line_no);
    if (cols.size() != 2) throw ValidationError(where, "expected surface<TAB>count");
    const auto count = detail::parse_int(cols[1], where);
    if (count < 0) throw ValidationError(where, "negative count");
    table.emplace_back(std::string(cols[0]), static_cast<std::uint64_t>(count));
  }
  sort_frequency(table);
  return table;
}

}  // namespace tagforge
