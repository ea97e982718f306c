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
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tagforge/caption_parser.hpp"
#include "tagforge/clustering.hpp"
#include "tagforge/common.hpp"
#include "tagforge/embedding_store.hpp"
#include "tagforge/label_system.hpp"
#include "tagforge/rng.hpp"
#include "tagforge/similarity_tagger.hpp"

namespace tagforge {

enum class Provenance : std::uint8_t { kParsed, kGenerated, kSeed };
enum class TagState : std::uint8_t { kKept, kRemovedOutlier, kRemovedNoPrediction, kRemovedContrary };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kParsed: return "parsed";
    case Provenance::kGenerated: return "generated";
    case Provenance::kSeed: return "seed";
  }
  return "parsed";
}

inline std::optional<Provenance> provenance_from_string(std::string_view s) {
  if (s == "parsed") return Provenance::kParsed;
  if (s == "generated") return Provenance::kGenerated;
  if (s == "seed") return Provenance::kSeed;
  return std::nullopt;
}

inline std::string_view to_string(TagState s) {
  switch (s) {
    case TagState::kKept: return "kept";
    case TagState::kRemovedOutlier: return "removed_outlier";
    case TagState::kRemovedNoPrediction: return "removed_no_prediction";
    case TagState::kRemovedContrary: return "removed_contrary";
  }
  return "kept";
}

struct TagEntry {
  TagId tag_id = 0;
  Provenance provenance = Provenance::kParsed;
  TagState state = TagState::kKept;
};

using ImageTag = std::pair<std::string, TagId>;

// Per-image tag annotations. Entries stay sorted by tag id; an entry is never
// deleted, only moved from kept to one of the removed states.
class AnnotationSet {
 public:
  using Images = std::map<std::string, std::vector<TagEntry>>;

  const Images& images() const { return images_; }

  // Returns false if (image, tag) already exists; its provenance is kept.
  bool add(const std::string& image_id, TagId tag, Provenance provenance) {
    auto& entries = images_[image_id];
    auto it = std::lower_bound(entries.begin(), entries.end(), tag,
                               [](const TagEntry& e, TagId t) { return e.tag_id < t; });
    if (it != entries.end() && it->tag_id == tag) return false;
    entries.insert(it, TagEntry{tag, provenance, TagState::kKept});
    return true;
  }

  const TagEntry* find(const std::string& image_id, TagId tag) const {
    auto img = images_.find(image_id);
    if (img == images_.end()) return nullptr;
    auto it = std::lower_bound(img->second.begin(), img->second.end(), tag,
                               [](const TagEntry& e, TagId t) { return e.tag_id < t; });
    return it != img->second.end() && it->tag_id == tag ? &*it : nullptr;
  }

  bool is_kept(const std::string& image_id, TagId tag) const {
    const TagEntry* e = find(image_id, tag);
    return e != nullptr && e->state == TagState::kKept;
  }

  // kept -> removed_*; returns false if the pair is absent or already removed.
  bool remove(const std::string& image_id, TagId tag, TagState reason) {
    if (reason == TagState::kKept) throw Error("remove() needs a removal state");
    auto img = images_.find(image_id);
    if (img == images_.end()) return false;
    for (TagEntry& e : img->second) {
      if (e.tag_id == tag) {
        if (e.state != TagState::kKept) return false;
        e.state = reason;
        return true;
      }
    }
    return false;
  }

  std::size_t kept_tags() const {
    std::size_t n = 0;
    for (const auto& [id, entries] : images_) {
      for (const TagEntry& e : entries) n += e.state == TagState::kKept;
    }
    return n;
  }

  // Images with at least one kept tag.
  std::size_t kept_images() const {
    std::size_t n = 0;
    for (const auto& [id, entries] : images_) {
      n += std::any_of(entries.begin(), entries.end(),
                       [](const TagEntry& e) { return e.state == TagState::kKept; });
    }
    return n;
  }

  // Same kept (image, tag, provenance) triples.
  bool same_kept(const AnnotationSet& other) const { return kept_view() == other.kept_view(); }

  std::vector<std::tuple<std::string, TagId, Provenance>> kept_view() const {
    std::vector<std::tuple<std::string, TagId, Provenance>> out;
    for (const auto& [id, entries] : images_) {
      for (const TagEntry& e : entries) {
        if (e.state == TagState::kKept) out.emplace_back(id, e.tag_id, e.provenance);
      }
    }
    return out;
  }

 private:
  Images images_;
};

// Kept entries only, images without kept tags omitted:
//   {"image_id": ..., "tags": [{"tag_id": n, "provenance": "..."}]}
inline std::string format_annotations_jsonl(const AnnotationSet& set) {
  std::string out;
  for (const auto& [image_id, entries] : set.images()) {
    nlohmann::ordered_json tags = nlohmann::ordered_json::array();
    for (const TagEntry& e : entries) {
      if (e.state != TagState::kKept) continue;
      nlohmann::ordered_json t;
      t["tag_id"] = e.tag_id;
      t["provenance"] = std::string(to_string(e.provenance));
      tags.push_back(std::move(t));
    }
    if (tags.empty()) continue;
    nlohmann::ordered_json j;
    j["image_id"] = image_id;
    j["tags"] = std::move(tags);
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline AnnotationSet read_annotations_jsonl(std::string_view text, const TagVocabulary& vocab) {
  AnnotationSet set;
  std::size_t n = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const std::string where = "annotations line " + std::to_string(n);
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("image_id") ||
        !j["image_id"].is_string() || !j.contains("tags") || !j["tags"].is_array()) {
      throw ValidationError(where, "expected {\"image_id\", \"tags\"}");
    }
    const std::string image_id = j["image_id"].get<std::string>();
    for (const auto& t : j["tags"]) {
      if (!t.is_object() || !t.contains("tag_id") || !t["tag_id"].is_number_integer()) {
        throw ValidationError(where, "tag entry without integer tag_id");
      }
      const auto id = t["tag_id"].get<TagId>();
      if (!vocab.contains_id(id)) throw ValidationError(where, "unknown tag id " + std::to_string(id));
      Provenance p = Provenance::kParsed;
      if (t.contains("provenance")) {
        auto parsed = t["provenance"].is_string()
                          ? provenance_from_string(t["provenance"].get<std::string>())
                          : std::nullopt;
        if (!parsed) throw ValidationError(where, "bad provenance");
        p = *parsed;
      }
      set.add(image_id, id, p);
    }
  }
  return set;
}

// Raw per-image tag id lists as produced by an external tagger:
//   {"image_id": ..., "tag_ids": [n, ...]}
using TagIdLists = std::vector<std::pair<std::string, std::vector<TagId>>>;

inline TagIdLists read_tag_id_lists(std::string_view text) {
  TagIdLists out;
  std::size_t n = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const std::string where = "generated tags line " + std::to_string(n);
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("image_id") ||
        !j["image_id"].is_string() || !j.contains("tag_ids") || !j["tag_ids"].is_array()) {
      throw ValidationError(where, "expected {\"image_id\", \"tag_ids\"}");
    }
    std::vector<TagId> ids;
    for (const auto& v : j["tag_ids"]) {
      if (!v.is_number_integer()) throw ValidationError(where, "tag ids must be integers");
      ids.push_back(v.get<TagId>());
    }
    out.emplace_back(j["image_id"].get<std::string>(), std::move(ids));
  }
  return out;
}

// Maps parsed surfaces onto vocabulary tag ids. Surfaces outside the
// vocabulary are not tags and are only counted.
inline TagIdLists map_parsed_tags(const std::vector<ImageTags>& images, const TagVocabulary& vocab,
                                  const LexiconBundle& lex, std::size_t* unmapped = nullptr) {
  TagIdLists out;
  for (const ImageTags& img : images) {
    std::vector<TagId> ids;
    for (const ParsedTag& tag : img.tags) {
      if (auto id = map_tag(tag.surface, vocab, lex)) {
        ids.push_back(*id);
      } else if (unmapped) {
        ++*unmapped;
      }
    }
    out.emplace_back(img.image_id, std::move(ids));
  }
  return out;
}

inline AnnotationSet annotations_from_lists(const TagIdLists& lists, const TagVocabulary& vocab,
                                            Provenance provenance, std::size_t* rejected = nullptr) {
  AnnotationSet set;
  for (const auto& [image_id, ids] : lists) {
    for (TagId id : ids) {
      if (!vocab.contains_id(id)) {
        if (rejected) ++*rejected;
        continue;
      }
      set.add(image_id, id, provenance);
    }
  }
  return set;
}

struct MergeResult {
  AnnotationSet merged;
  std::vector<ImageTag> added;  // in (image_id, tag_id) order
  std::size_t rejected = 0;     // (image, tag) records with unknown tag ids
};

// Per-image union. Base entries keep their provenance; everything new is
// provenance "generated".
inline MergeResult generate_merge(const AnnotationSet& parsed,
                                  const std::vector<TagIdLists>& generated_tag_files,
                                  const TagIdLists& generated_caption_tags,
                                  const TagVocabulary& vocab) {
  MergeResult result;
  result.merged = parsed;
  std::set<ImageTag> added;
  auto merge = [&](const TagIdLists& lists) {
    for (const auto& [image_id, ids] : lists) {
      for (TagId id : ids) {
        if (!vocab.contains_id(id)) {
          ++result.rejected;
          continue;
        }
        if (result.merged.add(image_id, id, Provenance::kGenerated)) added.emplace(image_id, id);
      }
    }
  };
  for (const auto& file : generated_tag_files) merge(file);
  merge(generated_caption_tags);
  result.added.assign(added.begin(), added.end());
  return result;
}

// ---------------------------------------------------------------------------
// Cleaning

struct RegionRecord {
  std::string image_id;
  std::string region_id;
  TagId tag_id = 0;
  double detector_score = 0.0;
  std::string embedding_key;
};

inline std::vector<RegionRecord> read_regions_jsonl(std::string_view text) {
  std::vector<RegionRecord> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t n = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const std::string where = "regions line " + std::to_string(n);
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError(where, "invalid JSON object");
    RegionRecord r;
    try {
      r.image_id = j.at("image_id").get<std::string>();
      r.region_id = j.at("region_id").is_string() ? j.at("region_id").get<std::string>()
                                                  : j.at("region_id").dump();
      r.tag_id = j.at("tag_id").get<TagId>();
      r.detector_score = j.value("score", 0.0);
      r.embedding_key = j.at("embedding_key").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where, e.what());
    }
    if (!(r.detector_score >= 0.0 && r.detector_score <= 1.0)) {
      throw ValidationError(where, "detector score outside [0, 1]");
    }
    if (!seen.emplace(r.image_id, r.region_id).second) {
      throw ValidationError(where, "duplicate region " + r.image_id + "/" + r.region_id);
    }
    out.push_back(std::move(r));
  }
  return out;
}

enum class OutlierScope : std::uint8_t { kCategory, kCluster };

struct CleaningOptions {
  double fraction = 0.10;
  std::size_t min_regions = 20;
  std::size_t max_k = 8;
  OutlierScope scope = OutlierScope::kCategory;
  LloydOptions lloyd;
};

struct CategoryCleaning {
  TagId tag_id = 0;
  std::size_t regions = 0;
  std::size_t k = 0;
  bool skipped = false;              // fewer than min_regions
  std::vector<std::size_t> outliers;  // indices into the input region list
  std::vector<ImageTag> removals;    // pairs whose every region is an outlier
  double inertia = 0.0;
  std::size_t iterations = 0;
};

// clamp(round(sqrt(n / 2)), 1, max_k)
inline std::size_t cluster_count(std::size_t n, std::size_t max_k = 8) {
  const auto k = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n) / 2.0)));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(max_k, 1));
}

// ceil(fraction * n), guarded against products like 0.1 * 300 landing a hair
// above an integer.
inline std::size_t outlier_quota(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

// Clusters one category's regions with K-Means++ seeded from
// derive_seed(seed, tag_id) and marks the regions farthest from their
// centroid as outliers (ties by image_id then region_id).
inline CategoryCleaning clean_category(TagId tag_id, const std::vector<RegionRecord>& regions,
                                       const EmbeddingTable& embeddings, std::uint64_t seed,
                                       const CleaningOptions& options = {}) {
  if (!(options.fraction >= 0.0 && options.fraction < 1.0)) {
    throw ValidationError("fraction", "must lie in [0, 1)");
  }
  CategoryCleaning out;
  out.tag_id = tag_id;
  out.regions = regions.size();
  if (regions.size() < std::max<std::size_t>(options.min_regions, 1)) {
    out.skipped = true;
    return out;
  }
  // Cluster in (image_id, region_id) order so input order does not matter.
  std::vector<std::size_t> order(regions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(regions[a].image_id, regions[a].region_id) <
           std::tie(regions[b].image_id, regions[b].region_id);
  });
  PointMatrix points(embeddings.dim());
  for (std::size_t i : order) {
    const RegionRecord& r = regions[i];
    const auto v = embeddings.find(r.embedding_key);
    if (!v) {
      throw EmbeddingError(EmbeddingError::Kind::kMissingKey, 0, r.embedding_key,
                           "region " + r.image_id + "/" + r.region_id + " has no embedding");
    }
    points.push_back(*v);
  }
  out.k = std::min(cluster_count(regions.size(), options.max_k), distinct_rows(points));
  const auto clustering =
      lloyd(points, kmeanspp_init(points, out.k, derive_seed(seed, static_cast<std::uint64_t>(tag_id))),
            options.lloyd);
  out.inertia = clustering.inertia;
  out.iterations = clustering.iterations;

  // Positions p below index the sorted order; order[p] is the input index.
  auto farther = [&](std::size_t a, std::size_t b) {
    if (clustering.distances[a] != clustering.distances[b]) {
      return clustering.distances[a] > clustering.distances[b];
    }
    return a < b;
  };
  std::vector<std::vector<std::size_t>> pools;
  if (options.scope == OutlierScope::kCategory) {
    pools.emplace_back(regions.size());
    std::iota(pools[0].begin(), pools[0].end(), std::size_t{0});
  } else {
    pools.resize(out.k);
    for (std::size_t p = 0; p < regions.size(); ++p) pools[clustering.assignment[p]].push_back(p);
  }
  std::vector<bool> is_outlier(regions.size(), false);
  for (auto& pool : pools) {
    std::sort(pool.begin(), pool.end(), farther);
    const std::size_t quota = std::min(pool.size(), outlier_quota(options.fraction, pool.size()));
    for (std::size_t r = 0; r < quota; ++r) is_outlier[order[pool[r]]] = true;
  }
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (is_outlier[i]) out.outliers.push_back(i);
  }

  std::map<std::string, bool> all_outliers;  // image -> every region an outlier
  for (std::size_t i = 0; i < regions.size(); ++i) {
    auto [it, inserted] = all_outliers.emplace(regions[i].image_id, true);
    it->second = it->second && is_outlier[i];
  }
  for (const auto& [image_id, all] : all_outliers) {
    if (all) out.removals.emplace_back(image_id, tag_id);
  }
  return out;
}

struct FilterDecision {
  std::string image_id;
  TagId tag_id = 0;
  TagState reason = TagState::kRemovedNoPrediction;
  double max_region_score = 0.0;
};

struct FilterSkip {
  std::string image_id;
  TagId tag_id = 0;
  std::string reason;
};

struct FilterResult {
  std::vector<FilterDecision> removals;  // (image_id, tag_id) order
  std::vector<FilterSkip> skipped;
};

struct FilterOptions {
  double margin = 0.05;
};

// For each kept pair with regions: removed_contrary when the whole image
// scores at or above threshold while every region is below threshold minus
// margin; otherwise removed_no_prediction when no region reaches threshold.
// Pairs without regions are untouched. `image_embeddings` may be null, which
// disables the contrary check.
inline FilterResult prediction_filter(const AnnotationSet& annotations,
                                      const std::vector<RegionRecord>& regions,
                                      const EmbeddingTable& region_embeddings,
                                      const EmbeddingTable* image_embeddings,
                                      const LabelQueryMatrix& queries,
                                      const ThresholdProfile& profile,
                                      const FilterOptions& options = {},
                                      const std::set<TagId>* categories = nullptr) {
  std::map<ImageTag, std::vector<const RegionRecord*>> by_pair;
  for (const RegionRecord& r : regions) {
    if (categories && !categories->count(r.tag_id)) continue;
    by_pair[{r.image_id, r.tag_id}].push_back(&r);
  }
  FilterResult result;
  for (const auto& [pair, support] : by_pair) {
    const auto& [image_id, tag] = pair;
    if (!annotations.is_kept(image_id, tag)) continue;
    const auto row = queries.row_of(tag);
    if (!row) {
      result.skipped.push_back({image_id, tag, "no label query for tag"});
      continue;
    }
    const auto query = queries.query(*row);
    bool missing = false;
    double max_score = -std::numeric_limits<double>::infinity();
    for (const RegionRecord* r : support) {
      const auto v = region_embeddings.find(r->embedding_key);
      if (!v || v->size() != query.size()) {
        missing = true;
        break;
      }
      max_score = std::max(max_score, dot(*v, query));
    }
    std::optional<double> image_score;
    if (!missing && image_embeddings) {
      const auto v = image_embeddings->find(image_id);
      if (!v || v->size() != query.size()) {
        missing = true;
      } else {
        image_score = dot(*v, query);
      }
    }
    if (missing) {
      result.skipped.push_back({image_id, tag, "missing embedding"});
      continue;
    }
    const double threshold = profile.effective(tag);
    if (image_score && *image_score >= threshold && max_score < threshold - options.margin) {
      result.removals.push_back({image_id, tag, TagState::kRemovedContrary, max_score});
    } else if (max_score < threshold) {
      result.removals.push_back({image_id, tag, TagState::kRemovedNoPrediction, max_score});
    }
  }
  return result;
}

}  // namespace tagforge
