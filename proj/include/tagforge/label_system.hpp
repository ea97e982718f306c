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
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tagforge/caption_parser.hpp"
#include "tagforge/common.hpp"
#include "tagforge/lexicon.hpp"

namespace tagforge {

using TagId = std::int32_t;

enum class Origin : std::uint8_t { kCorpus, kSeed, kBoth };

inline std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::kCorpus: return "corpus";
    case Origin::kSeed: return "seed";
    case Origin::kBoth: return "both";
  }
  return "corpus";
}

inline std::optional<Origin> origin_from_string(std::string_view s) {
  if (s == "corpus") return Origin::kCorpus;
  if (s == "seed") return Origin::kSeed;
  if (s == "both") return Origin::kBoth;
  return std::nullopt;
}

struct VocabEntry {
  std::string surface;
  TagId tag_id = 0;
  std::uint64_t frequency = 0;
  bool is_canonical = false;
  Origin origin = Origin::kCorpus;
};

using SynonymPair = std::pair<std::string, std::string>;

// The label system. Surfaces are unique; synonymous surfaces share a tag id.
// Ids are dense, starting at 0, in lexicographic order of the canonical
// surface; each group's canonical is its most frequent member (ties broken
// lexicographically).
class TagVocabulary {
 public:
  static constexpr std::string_view kHeader = "#tagforge-vocab v1";

  TagVocabulary() = default;

  // `entries` may be in any order; groups are rebuilt from tag ids and the
  // invariants are checked.
  explicit TagVocabulary(std::vector<VocabEntry> entries);

  std::size_t size() const { return entries_.size(); }
  std::size_t group_count() const { return groups_.size(); }
  const std::vector<VocabEntry>& entries() const { return entries_; }

  // Members of a group in lexicographic order.
  const std::vector<std::string>& members(TagId id) const {
    return groups_.at(static_cast<std::size_t>(id));
  }
  const std::string& canonical(TagId id) const {
    return entries_[canonical_index_.at(static_cast<std::size_t>(id))].surface;
  }
  bool contains_id(TagId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < groups_.size();
  }

  std::optional<TagId> find(std::string_view surface) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), surface,
                               [](const VocabEntry& e, std::string_view s) {
                                 return e.surface < s;
                               });
    if (it == entries_.end() || it->surface != surface) return std::nullopt;
    return it->tag_id;
  }

  // Content hash of the serialized rows; recorded by consumers that depend
  // on tag id assignment.
  std::string version() const { return detail::hex64(detail::fnv1a64(rows_text())); }

  std::string to_tsv() const;
  static TagVocabulary from_tsv(std::string_view text);

 private:
  std::string rows_text() const;

  std::vector<VocabEntry> entries_;  // sorted by surface
  std::vector<std::vector<std::string>> groups_;
  std::vector<std::size_t> canonical_index_;
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;  // smaller index becomes the root
  }

 private:
  std::vector<std::size_t> parent_;
};

inline void check_surface(std::string_view s, const std::string& where) {
  if (s.empty()) throw ValidationError(where, "empty surface");
  if (s.find_first_of("\t\n\r|") != std::string_view::npos) {
    throw ValidationError(where, "surface contains a tab, newline or '|': " + std::string(s));
  }
}

}  // namespace detail

inline TagVocabulary::TagVocabulary(std::vector<VocabEntry> entries)
    : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const VocabEntry& a, const VocabEntry& b) { return a.surface < b.surface; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    detail::check_surface(entries_[i].surface, "vocabulary");
    if (i > 0 && entries_[i].surface == entries_[i - 1].surface) {
      throw ValidationError("vocabulary", "duplicate surface '" + entries_[i].surface + "'");
    }
    if (entries_[i].tag_id < 0) throw ValidationError("vocabulary", "negative tag id");
    const auto id = static_cast<std::size_t>(entries_[i].tag_id);
    if (id >= groups_.size()) {
      groups_.resize(id + 1);
      canonical_index_.resize(id + 1, entries_.size());
    }
    groups_[id].push_back(entries_[i].surface);
    if (entries_[i].is_canonical) {
      if (canonical_index_[id] != entries_.size()) {
        throw ValidationError("vocabulary", "two canonicals for tag id " + std::to_string(id));
      }
      canonical_index_[id] = i;
    }
  }
  for (std::size_t id = 0; id < groups_.size(); ++id) {
    if (groups_[id].empty()) {
      throw ValidationError("vocabulary", "tag id " + std::to_string(id) + " unused");
    }
    if (canonical_index_[id] == entries_.size()) {
      throw ValidationError("vocabulary", "tag id " + std::to_string(id) + " has no canonical");
    }
    if (id > 0 && !(canonical(static_cast<TagId>(id - 1)) < canonical(static_cast<TagId>(id)))) {
      throw ValidationError("vocabulary", "tag ids are not in canonical lexicographic order");
    }
  }
}

inline std::string TagVocabulary::rows_text() const {
  std::map<std::string_view, const VocabEntry*> by_surface;
  for (const VocabEntry& e : entries_) by_surface.emplace(e.surface, &e);
  std::string out;
  for (std::size_t id = 0; id < groups_.size(); ++id) {
    std::string members, freqs, origins;
    for (const std::string& m : groups_[id]) {
      const VocabEntry* e = by_surface.at(m);
      if (!members.empty()) {
        members += '|';
        freqs += '|';
        origins += '|';
      }
      members += m;
      freqs += std::to_string(e->frequency);
      origins += to_string(e->origin);
    }
    out += std::to_string(id) + '\t' + canonical(static_cast<TagId>(id)) + '\t' + members +
           '\t' + freqs + '\t' + origins + '\n';
  }
  return out;
}

// Header line, a version comment, then one row per tag id:
//   tag_id<TAB>canonical<TAB>members<TAB>frequency<TAB>origin
// where members are '|'-separated in lexicographic order and the frequency
// and origin columns list one '|'-separated value per member.
inline std::string TagVocabulary::to_tsv() const {
  const std::string rows = rows_text();
  return std::string(kHeader) + "\n#version\t" + detail::hex64(detail::fnv1a64(rows)) + "\n" +
         rows;
}

inline TagVocabulary TagVocabulary::from_tsv(std::string_view text) {
  const auto lines = detail::lines_of(text);
  if (lines.empty() || lines.front() != kHeader) {
    throw ValidationError("vocabulary", "missing header '" + std::string(kHeader) + "'");
  }
  std::vector<VocabEntry> entries;
  std::optional<std::string> stated_version;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::string_view line = lines[n];
    if (line.rfind("#version\t", 0) == 0) {
      stated_version = std::string(detail::trim(line.substr(9)));
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "vocabulary line " + std::to_string(n + 1);
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 5) throw ValidationError(where, "expected 5 columns");
    const auto id = detail::parse_int(cols[0], where);
    const auto members = detail::split(cols[2], '|');
    const auto freqs = detail::split(cols[3], '|');
    const auto origins = detail::split(cols[4], '|');
    if (freqs.size() != members.size() || origins.size() != members.size()) {
      throw ValidationError(where, "member, frequency and origin lists differ in length");
    }
    bool canonical_seen = false;
    for (std::size_t m = 0; m < members.size(); ++m) {
      VocabEntry e;
      e.surface = std::string(members[m]);
      e.tag_id = static_cast<TagId>(id);
      const auto f = detail::parse_int(freqs[m], where);
      if (f < 0) throw ValidationError(where, "negative frequency");
      e.frequency = static_cast<std::uint64_t>(f);
      const auto o = origin_from_string(origins[m]);
      if (!o) throw ValidationError(where, "bad origin '" + std::string(origins[m]) + "'");
      e.origin = *o;
      e.is_canonical = members[m] == cols[1];
      canonical_seen |= e.is_canonical;
      entries.push_back(std::move(e));
    }
    if (!canonical_seen) throw ValidationError(where, "canonical is not a member");
  }
  TagVocabulary vocab(std::move(entries));
  if (stated_version && *stated_version != vocab.version()) {
    throw ValidationError("vocabulary", "version line does not match the rows");
  }
  return vocab;
}

// Top-k corpus tags (count descending, ties lexicographic) plus all seed
// surfaces, minus excludes; synonym pairs are merged with union-find over the
// surviving candidates.
inline TagVocabulary build_label_system(const FrequencyTable& freq, std::size_t k,
                                        const std::vector<std::vector<std::string>>& seeds,
                                        const std::vector<SynonymPair>& synonyms,
                                        const std::set<std::string>& excludes) {
  FrequencyTable ranked = freq;
  sort_frequency(ranked);
  std::map<std::string, std::uint64_t> corpus_freq;
  for (const auto& [s, c] : ranked) {
    if (!corpus_freq.emplace(s, c).second) {
      throw ValidationError("frequency", "duplicate surface '" + s + "'");
    }
  }

  std::map<std::string, VocabEntry> candidates;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
    const auto& [surface, count] = ranked[i];
    if (excludes.count(surface)) continue;
    candidates[surface] = VocabEntry{surface, 0, count, false, Origin::kCorpus};
  }
  for (const auto& list : seeds) {
    for (const std::string& surface : list) {
      if (surface.empty() || excludes.count(surface)) continue;
      auto it = candidates.find(surface);
      if (it != candidates.end()) {
        if (it->second.origin == Origin::kCorpus) it->second.origin = Origin::kBoth;
        continue;
      }
      auto f = corpus_freq.find(surface);
      candidates[surface] =
          VocabEntry{surface, 0, f == corpus_freq.end() ? 0 : f->second, false, Origin::kSeed};
    }
  }

  std::vector<VocabEntry> entries;
  entries.reserve(candidates.size());
  for (auto& [s, e] : candidates) {
    detail::check_surface(s, "candidate");
    entries.push_back(std::move(e));
  }
  auto index_of = [&](const std::string& s) -> std::optional<std::size_t> {
    auto it = std::lower_bound(entries.begin(), entries.end(), s,
                               [](const VocabEntry& e, const std::string& v) {
                                 return e.surface < v;
                               });
    if (it == entries.end() || it->surface != s) return std::nullopt;
    return static_cast<std::size_t>(it - entries.begin());
  };

  detail::UnionFind uf(entries.size());
  for (const auto& [a, b] : synonyms) {
    auto ia = index_of(a);
    auto ib = index_of(b);
    if (ia && ib) uf.unite(*ia, *ib);
  }

  // root -> best member index
  std::map<std::size_t, std::size_t> best;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::size_t root = uf.find(i);
    auto [it, inserted] = best.emplace(root, i);
    if (!inserted) {
      const VocabEntry& cur = entries[it->second];
      // entries are in lexicographic order, so the first of equal frequency wins
      if (entries[i].frequency > cur.frequency) it->second = i;
    }
  }
  std::vector<std::pair<std::string_view, std::size_t>> canon;  // canonical, root
  for (const auto& [root, idx] : best) canon.emplace_back(entries[idx].surface, root);
  std::sort(canon.begin(), canon.end());
  std::map<std::size_t, TagId> id_of_root;
  for (std::size_t id = 0; id < canon.size(); ++id) {
    id_of_root[canon[id].second] = static_cast<TagId>(id);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::size_t root = uf.find(i);
    entries[i].tag_id = id_of_root.at(root);
    entries[i].is_canonical = best.at(root) == i;
  }
  return TagVocabulary(std::move(entries));
}

// Lowercases, lemmatizes each whitespace-separated word and joins them with
// single spaces: the form parsed tags and vocabulary surfaces share.
inline std::string normalize_surface(std::string_view surface, const LexiconBundle& lex) {
  std::string out;
  const std::string lower = detail::ascii_lower(detail::trim(surface));
  for (std::string_view word : detail::split(lower, ' ')) {
    word = detail::trim(word);
    if (word.empty()) continue;
    if (!out.empty()) out += ' ';
    out += lemmatize(word, lex);
  }
  return out;
}

inline std::optional<TagId> map_tag(std::string_view surface, const TagVocabulary& vocab,
                                    const LexiconBundle& lex) {
  if (auto id = vocab.find(normalize_surface(surface, lex))) return id;
  std::string lowered;
  const std::string lower = detail::ascii_lower(detail::trim(surface));
  for (std::string_view word : detail::split(lower, ' ')) {
    word = detail::trim(word);
    if (word.empty()) continue;
    if (!lowered.empty()) lowered += ' ';
    lowered += word;
  }
  return vocab.find(lowered);
}

// One surface per line; blank lines and '#' comments skipped.
inline std::vector<std::string> read_surface_list(std::string_view text) {
  std::vector<std::string> out;
  for (std::string_view line : detail::lines_of(text)) {
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    out.emplace_back(line);
  }
  return out;
}

inline std::vector<SynonymPair> read_synonyms(std::string_view text) {
  std::vector<SynonymPair> out;
  std::size_t n = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++n;
    if (detail::trim(line).empty() || line.front() == '#') continue;
    const auto cols = detail::split(line, '\t');
    if (cols.size() != 2) {
      throw ValidationError("synonyms line " + std::to_string(n), "expected a<TAB>b");
    }
    out.emplace_back(std::string(detail::trim(cols[0])), std::string(detail::trim(cols[1])));
  }
  return out;
}

}  // namespace tagforge
