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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tagforge/common.hpp"
#include "tagforge/embedding_store.hpp"
#include "tagforge/label_system.hpp"

namespace tagforge {

// One unit-norm text query per tag id, rows in tag id order. Rows live in an
// EmbeddingTable keyed by canonical surface so the matrix persists as EMB1.
struct LabelQueryMatrix {
  static constexpr double kUnitTolerance = 1e-6;

  std::string vocab_version;
  std::vector<std::string> templates;
  std::vector<TagId> tag_ids;
  EmbeddingTable queries{1, true};

  std::size_t size() const { return tag_ids.size(); }
  std::size_t dim() const { return queries.dim(); }
  std::span<const double> query(std::size_t row) const { return queries.row(row); }

  std::optional<std::size_t> row_of(TagId id) const {
    auto it = std::lower_bound(tag_ids.begin(), tag_ids.end(), id);
    if (it == tag_ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - tag_ids.begin());
  }

  // Writes `path` (EMB1) and `path + ".meta.json"`.
  void save(const std::string& path) const {
    queries.save(path);
    nlohmann::ordered_json meta;
    meta["vocab_version"] = vocab_version;
    meta["templates"] = templates;
    meta["tag_ids"] = tag_ids;
    detail::write_file(path + ".meta.json", meta.dump(2) + "\n");
  }

  static LabelQueryMatrix load(const std::string& path) {
    LabelQueryMatrix m;
    m.queries = EmbeddingTable::load(path);
    const auto meta = nlohmann::json::parse(detail::read_file(path + ".meta.json"), nullptr, false);
    if (meta.is_discarded() || !meta.is_object() || !meta.contains("tag_ids") ||
        !meta["tag_ids"].is_array()) {
      throw ValidationError(path + ".meta.json", "malformed label-query sidecar");
    }
    m.vocab_version = meta.value("vocab_version", "");
    if (meta.contains("templates")) m.templates = meta["templates"].get<std::vector<std::string>>();
    m.tag_ids = meta["tag_ids"].get<std::vector<TagId>>();
    if (m.tag_ids.size() != m.queries.size()) {
      throw ValidationError(path + ".meta.json", "tag id count differs from stored queries");
    }
    if (!std::is_sorted(m.tag_ids.begin(), m.tag_ids.end()) ||
        std::adjacent_find(m.tag_ids.begin(), m.tag_ids.end()) != m.tag_ids.end()) {
      throw ValidationError(path + ".meta.json", "tag ids must be strictly increasing");
    }
    return m;
  }
};

// Names and prompt strings, one `name<TAB>prompt` per line; the prompt holds
// a "{tag}" placeholder.
struct PromptTemplate {
  std::string name;
  std::string prompt;

  std::string render(std::string_view tag) const {
    std::string out = prompt;
    const auto pos = out.find("{tag}");
    if (pos != std::string::npos) out.replace(pos, 5, tag);
    return out;
  }
};

inline std::vector<PromptTemplate> read_templates(std::string_view text) {
  std::vector<PromptTemplate> out;
  std::size_t n = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++n;
    if (detail::trim(line).empty() || line.front() == '#') continue;
    const auto cols = detail::split(line, '\t');
    const std::string where = "templates line " + std::to_string(n);
    if (cols.size() != 2) throw ValidationError(where, "expected name<TAB>prompt");
    if (cols[0].find("::") != std::string_view::npos) {
      throw ValidationError(where, "template name may not contain '::'");
    }
    out.push_back({std::string(cols[0]), std::string(cols[1])});
  }
  if (out.empty()) throw ValidationError("templates", "no templates");
  return out;
}

// Embedding key of a rendered prompt: "template::canonical".
inline std::string prompt_key(std::string_view template_name, std::string_view canonical) {
  std::string key(template_name);
  key += "::";
  key += canonical;
  return key;
}

// Prompt ensembling: the mean of a tag's per-template unit vectors,
// renormalized.
inline LabelQueryMatrix build_label_queries(const TagVocabulary& vocab,
                                            const EmbeddingTable& prompts,
                                            const std::vector<std::string>& templates) {
  if (templates.empty()) throw ValidationError("templates", "no templates");
  std::vector<std::string> missing;
  for (std::size_t id = 0; id < vocab.group_count(); ++id) {
    for (const std::string& t : templates) {
      const std::string key = prompt_key(t, vocab.canonical(static_cast<TagId>(id)));
      if (!prompts.contains(key)) missing.push_back(key);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValidationError("prompt_embeddings",
                          std::to_string(missing.size()) + " missing (template::tag) keys: " + list);
  }
  LabelQueryMatrix m;
  m.vocab_version = vocab.version();
  m.templates = templates;
  m.queries = EmbeddingTable(prompts.dim(), true);
  std::vector<double> mean(prompts.dim());
  for (std::size_t id = 0; id < vocab.group_count(); ++id) {
    const std::string& canonical = vocab.canonical(static_cast<TagId>(id));
    std::fill(mean.begin(), mean.end(), 0.0);
    for (const std::string& t : templates) {
      const std::string key = prompt_key(t, canonical);
      const auto v = prompts.at(key);
      if (std::abs(l2_norm(v) - 1.0) > EmbeddingTable::kNormTolerance) {
        throw EmbeddingError(EmbeddingError::Kind::kNotNormalized, 0, key,
                             "prompt embedding is not unit-norm");
      }
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += v[d];
    }
    for (double& x : mean) x /= static_cast<double>(templates.size());
    const double norm = l2_norm(mean);
    if (norm < 1e-12) {
      throw EmbeddingError(EmbeddingError::Kind::kZeroVector, 0, canonical,
                           "prompt ensemble averages to zero");
    }
    for (double& x : mean) x /= norm;
    m.tag_ids.push_back(static_cast<TagId>(id));
    m.queries.add(canonical, mean);
  }
  return m;
}

// Per-tag dot products, no norm check. Linear in `embedding`.
inline std::vector<double> raw_scores(std::span<const double> embedding,
                                      const LabelQueryMatrix& queries) {
  if (embedding.size() != queries.dim()) {
    throw EmbeddingError(EmbeddingError::Kind::kDimensionMismatch, 0, "",
                         "embedding has " + std::to_string(embedding.size()) +
                             " components, queries have " + std::to_string(queries.dim()));
  }
  std::vector<double> out(queries.size());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(embedding, queries.query(r));
  return out;
}

// Cosine score per tag row for a unit-norm embedding.
inline std::vector<double> score(std::span<const double> embedding,
                                 const LabelQueryMatrix& queries) {
  auto out = raw_scores(embedding, queries);
  if (std::abs(l2_norm(embedding) - 1.0) > EmbeddingTable::kNormTolerance) {
    throw EmbeddingError(EmbeddingError::Kind::kNotNormalized, 0, "",
                         "scored embedding is not unit-norm");
  }
  return out;
}

struct ThresholdProfile {
  static constexpr double kDefaultThreshold = 0.2;

  double default_threshold = kDefaultThreshold;
  std::map<TagId, double> overrides;

  double effective(TagId id) const {
    auto it = overrides.find(id);
    return it == overrides.end() ? default_threshold : it->second;
  }

  void validate(const LabelQueryMatrix& queries) const {
    for (const auto& [id, t] : overrides) {
      if (!queries.row_of(id)) {
        throw ValidationError("thresholds", "override for unknown tag id " + std::to_string(id));
      }
    }
  }

  // "*<TAB>default" first, then tag_id<TAB>threshold ascending.
  std::string to_tsv() const {
    std::string out = "*\t" + detail::format_double(default_threshold) + "\n";
    for (const auto& [id, t] : overrides) {
      out += std::to_string(id) + "\t" + detail::format_double(t) + "\n";
    }
    return out;
  }

  static ThresholdProfile from_tsv(std::string_view text) {
    ThresholdProfile p;
    std::size_t n = 0;
    for (std::string_view line : detail::lines_of(text)) {
      ++n;
      if (detail::trim(line).empty() || line.front() == '#') continue;
      const auto cols = detail::split(line, '\t');
      const std::string where = "thresholds line " + std::to_string(n);
      if (cols.size() != 2) throw ValidationError(where, "expected tag_id<TAB>threshold");
      const double t = detail::parse_double(cols[1], where);
      if (!std::isfinite(t)) throw ValidationError(where, "threshold must be finite");
      if (detail::trim(cols[0]) == "*") {
        p.default_threshold = t;
      } else {
        const auto id = detail::parse_int(cols[0], where);
        if (!p.overrides.emplace(static_cast<TagId>(id), t).second) {
          throw ValidationError(where, "duplicate tag id");
        }
      }
    }
    return p;
  }
};

// Tag ids whose score reaches their effective threshold, ascending.
inline std::vector<TagId> tag_from_scores(std::span<const double> scores,
                                          const LabelQueryMatrix& queries,
                                          const ThresholdProfile& profile) {
  std::vector<TagId> out;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (scores[r] >= profile.effective(queries.tag_ids[r])) out.push_back(queries.tag_ids[r]);
  }
  return out;
}

inline std::vector<TagId> tag_image(std::span<const double> embedding,
                                    const LabelQueryMatrix& queries,
                                    const ThresholdProfile& profile) {
  const auto s = score(embedding, queries);
  return tag_from_scores(s, queries, profile);
}

// Column-major validation data: scores[c][i] and labels[c][i] for class c
// on image i. Labels are 1 for positive, 0 for negative.
struct CalibrationData {
  std::vector<TagId> classes;
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<std::uint8_t>> labels;
};

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  // 2TP / (2TP + FP + FN); 0 when nothing is positive or predicted.
  double f1() const {
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
  }
};

inline Confusion confusion_at(std::span<const double> scores, std::span<const std::uint8_t> labels,
                              double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i]) ++c.tp;
    if (predicted && !labels[i]) ++c.fp;
    if (!predicted && labels[i]) ++c.fn;
  }
  return c;
}

// Per class: the grid value with the best F1, ties going to the larger
// threshold; classes lacking a positive or a negative get no override.
// The default is the grid value with the best micro-F1 over all classes.
inline ThresholdProfile calibrate_thresholds(const CalibrationData& data,
                                             std::vector<double> grid) {
  if (grid.empty()) throw ValidationError("grid", "empty threshold grid");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (data.scores.size() != data.classes.size() || data.labels.size() != data.classes.size()) {
    throw ValidationError("calibration", "class, score and label arrays differ in length");
  }
  ThresholdProfile profile;
  double best_micro = -1.0;
  for (double t : grid) {
    Confusion total;
    for (std::size_t c = 0; c < data.classes.size(); ++c) {
      const Confusion k = confusion_at(data.scores[c], data.labels[c], t);
      total.tp += k.tp;
      total.fp += k.fp;
      total.fn += k.fn;
    }
    if (total.f1() >= best_micro) {  // ascending grid: >= keeps the larger on ties
      best_micro = total.f1();
      profile.default_threshold = t;
    }
  }
  for (std::size_t c = 0; c < data.classes.size(); ++c) {
    const auto& labels = data.labels[c];
    const auto positives = std::count(labels.begin(), labels.end(), std::uint8_t{1});
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) continue;
    double best = -1.0;
    double best_t = grid.front();
    for (double t : grid) {
      const double f1 = confusion_at(data.scores[c], labels, t).f1();
      if (f1 >= best) {
        best = f1;
        best_t = t;
      }
    }
    profile.overrides[data.classes[c]] = best_t;
  }
  return profile;
}

}  // namespace tagforge
