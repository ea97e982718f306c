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
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tagforge/caption_parser.hpp"
#include "tagforge/config.hpp"
#include "tagforge/data_engine.hpp"
#include "tagforge/embedding_store.hpp"
#include "tagforge/label_system.hpp"
#include "tagforge/lexicon.hpp"
#include "tagforge/parallel.hpp"
#include "tagforge/similarity_tagger.hpp"

namespace tagforge {

// Engine configuration. Keys of the key-value file are the member names;
// see README for the full schema.
struct EngineConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string vocab;
  std::string lexicon_dir;

  // Base annotations: exactly one of captions / parsed / annotations.
  std::optional<std::string> captions;
  std::optional<std::string> parsed;
  std::optional<std::string> annotations;
  std::optional<std::string> seed_annotations;

  std::vector<std::string> generated_tags;
  std::vector<std::string> generated_captions;

  std::optional<std::string> regions;
  std::optional<std::string> region_embeddings;
  std::optional<std::string> image_embeddings;
  std::optional<std::string> queries;
  std::optional<std::string> thresholds;
  std::optional<std::string> whitelist;

  bool generation = true;
  bool outlier_cleaning = true;
  bool prediction_filter = true;

  CleaningOptions cleaning;
  FilterOptions filter;
  std::optional<double> default_threshold;

  // Outputs (optional for library use).
  std::optional<std::string> output;
  std::optional<std::string> audit;
  std::optional<std::string> stats;
  std::optional<std::string> category_stats;
  std::optional<std::string> parsed_output;

  static EngineConfig from(const KeyValueConfig& kv) {
    EngineConfig c;
    c.seed = kv.get_uint("seed", 0, 0, UINT64_MAX);
    if (!kv.get("seed")) throw ValidationError("seed", "required key is missing");
    c.workers = kv.get_uint("workers", 1, 1, 1024);
    kv.require("vocab");
    c.vocab = *kv.get_existing_path("vocab");
    c.lexicon_dir = resolve_data_dir(kv.get("lexicon_dir"));
    c.captions = kv.get_existing_path("captions");
    c.parsed = kv.get_existing_path("parsed");
    c.annotations = kv.get_existing_path("annotations");
    const int bases = c.captions.has_value() + c.parsed.has_value() + c.annotations.has_value();
    if (bases != 1) {
      throw ValidationError("captions", "set exactly one of captions, parsed, annotations");
    }
    c.seed_annotations = kv.get_existing_path("seed_annotations");
    for (const char* key : {"generated_tags", "generated_captions"}) {
      for (const std::string& path : kv.get_list(key)) {
        if (!std::filesystem::exists(path)) throw ValidationError(key, "no such file: " + path);
      }
    }
    c.generated_tags = kv.get_list("generated_tags");
    c.generated_captions = kv.get_list("generated_captions");
    c.regions = kv.get_existing_path("regions");
    c.region_embeddings = kv.get_existing_path("region_embeddings");
    c.image_embeddings = kv.get_existing_path("image_embeddings");
    c.queries = kv.get_existing_path("queries");
    c.thresholds = kv.get_existing_path("thresholds");
    c.whitelist = kv.get_existing_path("whitelist");
    c.generation = kv.get_bool("generation", true);
    c.outlier_cleaning = kv.get_bool("outlier_cleaning", true);
    c.prediction_filter = kv.get_bool("prediction_filter", true);
    c.cleaning.fraction = kv.get_double("fraction", 0.10, 0.0, std::nextafter(1.0, 0.0));
    c.cleaning.min_regions = kv.get_uint("min_regions", 20, 1, UINT32_MAX);
    c.cleaning.max_k = kv.get_uint("max_k", 8, 1, 1024);
    c.cleaning.lloyd.tol = kv.get_double("tol", 1e-4, 0.0, 1e6);
    c.cleaning.lloyd.max_iter = kv.get_uint("max_iter", 100, 1, 1000000);
    const std::string scope = kv.get_string("outlier_scope", "category");
    if (scope == "category") {
      c.cleaning.scope = OutlierScope::kCategory;
    } else if (scope == "cluster") {
      c.cleaning.scope = OutlierScope::kCluster;
    } else {
      throw ValidationError("outlier_scope", "expected category or cluster");
    }
    c.filter.margin = kv.get_double("margin", 0.05, 0.0, 2.0);
    if (kv.get("threshold")) c.default_threshold = kv.get_double("threshold", 0.2, -2.0, 2.0);
    if (c.outlier_cleaning && (!c.regions || !c.region_embeddings)) {
      throw ValidationError(c.regions ? "region_embeddings" : "regions",
                            "required when outlier_cleaning is on");
    }
    if (c.prediction_filter && (!c.regions || !c.region_embeddings || !c.queries)) {
      throw ValidationError(!c.regions ? "regions" : !c.region_embeddings ? "region_embeddings" : "queries",
                            "required when prediction_filter is on");
    }
    c.output = kv.get("output");
    c.audit = kv.get("audit");
    c.stats = kv.get("stats");
    c.category_stats = kv.get("category_stats");
    c.parsed_output = kv.get("parsed_output");
    return c;
  }
};

namespace stage {
inline constexpr std::string_view kParseMerge = "parse-merge";
inline constexpr std::string_view kGenerate = "generate";
inline constexpr std::string_view kCleanOutlier = "clean-outlier";
inline constexpr std::string_view kPredictionFilter = "prediction-filter";
}  // namespace stage

struct StageStats {
  std::string stage;
  std::size_t images = 0;
  std::size_t tags = 0;
  std::size_t added = 0;
  std::size_t removed_outlier = 0;
  std::size_t removed_no_prediction = 0;
  std::size_t removed_contrary = 0;

  std::size_t removed() const { return removed_outlier + removed_no_prediction + removed_contrary; }
  friend bool operator==(const StageStats&, const StageStats&) = default;
};

// First row whose tag count breaks tags = previous tags + added - removed,
// or nullopt when every row reconciles.
inline std::optional<std::size_t> conservation_violation(const std::vector<StageStats>& rows) {
  std::size_t prev = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].tags + rows[i].removed() != prev + rows[i].added) return i;
    prev = rows[i].tags;
  }
  return std::nullopt;
}

inline std::string format_stats_tsv(const std::vector<StageStats>& rows) {
  std::string out =
      "stage\timages\ttags\tadded\tremoved_outlier\tremoved_no_prediction\tremoved_contrary\n";
  for (const StageStats& s : rows) {
    out += s.stage + '\t' + std::to_string(s.images) + '\t' + std::to_string(s.tags) + '\t' +
           std::to_string(s.added) + '\t' + std::to_string(s.removed_outlier) + '\t' +
           std::to_string(s.removed_no_prediction) + '\t' + std::to_string(s.removed_contrary) + '\n';
  }
  return out;
}

inline std::vector<StageStats> read_stats_tsv(std::string_view text) {
  std::vector<StageStats> rows;
  const auto lines = detail::lines_of(text);
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (detail::trim(lines[n]).empty() || lines[n].front() == '#') continue;
    const auto cols = detail::split(lines[n], '\t');
    const std::string where = "stats line " + std::to_string(n + 1);
    if (cols.size() != 7) throw ValidationError(where, "expected 7 columns");
    auto num = [&](std::size_t i) {
      const auto v = detail::parse_int(cols[i], where);
      if (v < 0) throw ValidationError(where, "negative count");
      return static_cast<std::size_t>(v);
    };
    rows.push_back({std::string(cols[0]), num(1), num(2), num(3), num(4), num(5), num(6)});
  }
  return rows;
}

struct AuditEvent {
  std::string image_id;
  TagId tag_id = 0;
  bool added = false;
  std::string reason;  // generated | outlier | no_prediction | contrary
  std::string stage;
};

inline std::string format_audit_jsonl(const std::vector<AuditEvent>& events) {
  std::string out;
  for (const AuditEvent& e : events) {
    nlohmann::ordered_json j;
    j["image_id"] = e.image_id;
    j["tag_id"] = e.tag_id;
    j["action"] = e.added ? "added" : "removed";
    j["reason"] = e.reason;
    j["stage"] = e.stage;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<AuditEvent> read_audit_jsonl(std::string_view text) {
  std::vector<AuditEvent> out;
  std::size_t n = 0;
  for (std::string_view line : detail::lines_of(text)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    const std::string where = "audit line " + std::to_string(n);
    try {
      AuditEvent e;
      e.image_id = j.at("image_id").get<std::string>();
      e.tag_id = j.at("tag_id").get<TagId>();
      const std::string action = j.at("action").get<std::string>();
      if (action != "added" && action != "removed") throw ValidationError(where, "bad action");
      e.added = action == "added";
      e.reason = j.at("reason").get<std::string>();
      e.stage = j.at("stage").get<std::string>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(where, ex.what());
    }
  }
  return out;
}

inline TagState state_for_reason(std::string_view reason) {
  if (reason == "outlier") return TagState::kRemovedOutlier;
  if (reason == "no_prediction") return TagState::kRemovedNoPrediction;
  if (reason == "contrary") return TagState::kRemovedContrary;
  throw ValidationError("audit", "unknown removal reason '" + std::string(reason) + "'");
}

inline std::string_view reason_for_state(TagState s) {
  switch (s) {
    case TagState::kRemovedOutlier: return "outlier";
    case TagState::kRemovedNoPrediction: return "no_prediction";
    case TagState::kRemovedContrary: return "contrary";
    case TagState::kKept: break;
  }
  return "kept";
}

// Applies audit events in order to a copy of `base`.
inline AnnotationSet replay_audit(const AnnotationSet& base, const std::vector<AuditEvent>& events) {
  AnnotationSet set = base;
  for (const AuditEvent& e : events) {
    if (e.added) {
      if (!set.add(e.image_id, e.tag_id, Provenance::kGenerated)) {
        throw ValidationError("audit", "replayed addition already present: " + e.image_id);
      }
    } else if (!set.remove(e.image_id, e.tag_id, state_for_reason(e.reason))) {
      throw ValidationError("audit", "replayed removal of a missing tag: " + e.image_id);
    }
  }
  return set;
}

// One stage failed; `partial` holds the rows of the stages that completed.
class StageError : public Error {
 public:
  StageError(std::string stage, std::vector<StageStats> partial, const std::string& what)
      : Error("stage " + stage + " failed: " + what),
        stage_(std::move(stage)),
        partial_(std::move(partial)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::vector<StageStats>& partial() const noexcept { return partial_; }

 private:
  std::string stage_;
  std::vector<StageStats> partial_;
};

struct EngineRun {
  AnnotationSet parsed;  // after parse-merge
  AnnotationSet final;   // every entry with its state
  std::vector<StageStats> stats;
  std::vector<AuditEvent> audit;
  std::vector<CategoryCleaning> categories;  // tag id order
  std::vector<FilterSkip> filter_skipped;
  std::vector<Reject> caption_rejects;
  std::size_t unmapped_surfaces = 0;
  std::size_t rejected_generated = 0;
};

inline std::set<TagId> read_whitelist(std::string_view text, const TagVocabulary& vocab,
                                      const LexiconBundle& lex) {
  std::set<TagId> out;
  for (const std::string& item : read_surface_list(text)) {
    std::int64_t id = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), id);
    if (ec == std::errc{} && ptr == item.data() + item.size()) {
      if (!vocab.contains_id(static_cast<TagId>(id))) {
        throw ValidationError("whitelist", "unknown tag id " + item);
      }
      out.insert(static_cast<TagId>(id));
    } else if (auto mapped = map_tag(item, vocab, lex)) {
      out.insert(*mapped);
    } else {
      throw ValidationError("whitelist", "surface not in vocabulary: " + item);
    }
  }
  return out;
}

namespace detail {

inline StageStats snapshot(std::string_view name, const AnnotationSet& set) {
  StageStats s;
  s.stage = std::string(name);
  s.images = set.kept_images();
  s.tags = set.kept_tags();
  return s;
}

inline EmbeddingTable load_unit_table(const std::string& path) {
  EmbeddingTable t = EmbeddingTable::load(path);
  return t.normalized() ? t : normalize(t);
}

}  // namespace detail

// parse-merge -> generate -> clean-outlier (per category) -> prediction-filter.
// Every stage appends one stats row; disabled stages are left out.
inline EngineRun run_engine(const EngineConfig& cfg) {
  EngineRun run;
  std::string current(stage::kParseMerge);
  try {
    const TagVocabulary vocab = TagVocabulary::from_tsv(detail::read_file(cfg.vocab));
    const bool need_lexicon = cfg.captions || cfg.parsed || !cfg.generated_captions.empty() ||
                              cfg.whitelist.has_value();
    const LexiconBundle lex = need_lexicon ? LexiconBundle::load(cfg.lexicon_dir) : LexiconBundle{};

    // parse-merge
    if (cfg.captions) {
      const CorpusResult corpus = parse_corpus(detail::read_file(*cfg.captions), lex, cfg.workers);
      run.caption_rejects = corpus.rejects;
      run.parsed = annotations_from_lists(map_parsed_tags(corpus.images, vocab, lex, &run.unmapped_surfaces),
                                          vocab, Provenance::kParsed);
    } else if (cfg.parsed) {
      const auto images = read_image_tags_jsonl(detail::read_file(*cfg.parsed));
      run.parsed = annotations_from_lists(map_parsed_tags(images, vocab, lex, &run.unmapped_surfaces),
                                          vocab, Provenance::kParsed);
    } else {
      run.parsed = read_annotations_jsonl(detail::read_file(*cfg.annotations), vocab);
    }
    if (cfg.seed_annotations) {
      const auto seeds = read_tag_id_lists(detail::read_file(*cfg.seed_annotations));
      for (const auto& [image_id, ids] : seeds) {
        for (TagId id : ids) {
          if (!vocab.contains_id(id)) {
            ++run.rejected_generated;
            continue;
          }
          run.parsed.add(image_id, id, Provenance::kSeed);
        }
      }
    }
    {
      StageStats s = detail::snapshot(stage::kParseMerge, run.parsed);
      s.added = s.tags;
      run.stats.push_back(s);
    }
    AnnotationSet set = run.parsed;

    if (cfg.generation) {
      current = stage::kGenerate;
      std::vector<TagIdLists> files;
      for (const auto& path : cfg.generated_tags) files.push_back(read_tag_id_lists(detail::read_file(path)));
      TagIdLists caption_tags;
      for (const auto& path : cfg.generated_captions) {
        const CorpusResult corpus = parse_corpus(detail::read_file(path), lex, cfg.workers);
        for (auto& r : corpus.rejects) run.caption_rejects.push_back(r);
        for (auto& entry : map_parsed_tags(corpus.images, vocab, lex, &run.unmapped_surfaces)) {
          caption_tags.push_back(std::move(entry));
        }
      }
      MergeResult merged = generate_merge(set, files, caption_tags, vocab);
      run.rejected_generated += merged.rejected;
      set = std::move(merged.merged);
      StageStats s = detail::snapshot(stage::kGenerate, set);
      s.added = merged.added.size();
      run.stats.push_back(s);
      for (const auto& [image_id, tag] : merged.added) {
        run.audit.push_back({image_id, tag, true, "generated", std::string(stage::kGenerate)});
      }
    }

    std::vector<RegionRecord> regions;
    std::optional<EmbeddingTable> region_table;
    std::optional<std::set<TagId>> whitelist;
    if (cfg.outlier_cleaning || cfg.prediction_filter) {
      current = cfg.outlier_cleaning ? stage::kCleanOutlier : stage::kPredictionFilter;
      regions = read_regions_jsonl(detail::read_file(*cfg.regions));
      for (const RegionRecord& r : regions) {
        if (!vocab.contains_id(r.tag_id)) {
          throw ValidationError("regions", "unknown tag id " + std::to_string(r.tag_id));
        }
      }
      region_table = detail::load_unit_table(*cfg.region_embeddings);
      if (cfg.whitelist) whitelist = read_whitelist(detail::read_file(*cfg.whitelist), vocab, lex);
    }

    if (cfg.outlier_cleaning) {
      current = stage::kCleanOutlier;
      std::map<TagId, std::vector<RegionRecord>> by_tag;
      for (const RegionRecord& r : regions) {
        if (whitelist && !whitelist->count(r.tag_id)) continue;
        by_tag[r.tag_id].push_back(r);
      }
      std::vector<TagId> tags;
      for (const auto& [tag, list] : by_tag) tags.push_back(tag);
      run.categories.resize(tags.size());
      parallel_for(tags.size(), cfg.workers, [&](std::size_t i) {
        run.categories[i] = clean_category(tags[i], by_tag.at(tags[i]), *region_table, cfg.seed, cfg.cleaning);
      });
      StageStats s;
      for (const CategoryCleaning& cat : run.categories) {
        for (const auto& [image_id, tag] : cat.removals) {
          if (set.remove(image_id, tag, TagState::kRemovedOutlier)) {
            ++s.removed_outlier;
            run.audit.push_back({image_id, tag, false, "outlier", std::string(stage::kCleanOutlier)});
          }
        }
      }
      StageStats snap = detail::snapshot(stage::kCleanOutlier, set);
      snap.removed_outlier = s.removed_outlier;
      run.stats.push_back(snap);
    }

    if (cfg.prediction_filter) {
      current = stage::kPredictionFilter;
      const LabelQueryMatrix queries = LabelQueryMatrix::load(*cfg.queries);
      if (!queries.vocab_version.empty() && queries.vocab_version != vocab.version()) {
        throw ValidationError("queries", "built for vocabulary " + queries.vocab_version +
                                             ", active vocabulary is " + vocab.version());
      }
      ThresholdProfile profile;
      if (cfg.thresholds) profile = ThresholdProfile::from_tsv(detail::read_file(*cfg.thresholds));
      if (cfg.default_threshold) profile.default_threshold = *cfg.default_threshold;
      profile.validate(queries);
      std::optional<EmbeddingTable> image_table;
      if (cfg.image_embeddings) image_table = detail::load_unit_table(*cfg.image_embeddings);
      const FilterResult filtered =
          prediction_filter(set, regions, *region_table, image_table ? &*image_table : nullptr, queries,
                            profile, cfg.filter, whitelist ? &*whitelist : nullptr);
      run.filter_skipped = filtered.skipped;
      StageStats counts;
      for (const FilterDecision& d : filtered.removals) {
        if (!set.remove(d.image_id, d.tag_id, d.reason)) continue;
        (d.reason == TagState::kRemovedContrary ? counts.removed_contrary : counts.removed_no_prediction)++;
        run.audit.push_back({d.image_id, d.tag_id, false, std::string(reason_for_state(d.reason)),
                             std::string(stage::kPredictionFilter)});
      }
      StageStats snap = detail::snapshot(stage::kPredictionFilter, set);
      snap.removed_no_prediction = counts.removed_no_prediction;
      snap.removed_contrary = counts.removed_contrary;
      run.stats.push_back(snap);
    }

    run.final = std::move(set);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(current, run.stats, e.what());
  }
  if (auto bad = conservation_violation(run.stats)) {
    throw StageError(run.stats[*bad].stage, run.stats, "tag accounting does not reconcile");
  }
  return run;
}

inline std::string format_category_stats_tsv(const std::vector<CategoryCleaning>& cats) {
  std::string out = "tag_id\tregions\tk\tstatus\toutlier_regions\tremoved_pairs\tinertia\titerations\n";
  for (const CategoryCleaning& c : cats) {
    out += std::to_string(c.tag_id) + '\t' + std::to_string(c.regions) + '\t' + std::to_string(c.k) +
           '\t' + (c.skipped ? "skipped" : "cleaned") + '\t' + std::to_string(c.outliers.size()) + '\t' +
           std::to_string(c.removals.size()) + '\t' + detail::format_double(c.inertia) + '\t' +
           std::to_string(c.iterations) + '\n';
  }
  return out;
}

inline void write_engine_outputs(const EngineRun& run, const EngineConfig& cfg) {
  if (cfg.output) detail::write_file(*cfg.output, format_annotations_jsonl(run.final));
  if (cfg.audit) detail::write_file(*cfg.audit, format_audit_jsonl(run.audit));
  if (cfg.stats) detail::write_file(*cfg.stats, format_stats_tsv(run.stats));
  if (cfg.category_stats) detail::write_file(*cfg.category_stats, format_category_stats_tsv(run.categories));
  if (cfg.parsed_output) detail::write_file(*cfg.parsed_output, format_annotations_jsonl(run.parsed));
}

}  // namespace tagforge
