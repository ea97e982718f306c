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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tagforge/common.hpp"
#include "tagforge/label_system.hpp"
#include "tagforge/similarity_tagger.hpp"

namespace tagforge {

enum class Label : std::uint8_t { kNegative = 0, kPositive = 1, kUnannotated = 2 };

// Dense image x class score and label grids. A class without a score for an
// image carries -infinity, which ranks below every real score.
struct EvalInstance {
  std::vector<std::string> image_ids;
  std::vector<TagId> classes;      // ascending
  std::vector<double> scores;      // image-major, image_ids.size() x classes.size()
  std::vector<Label> labels;

  std::size_t images() const { return image_ids.size(); }
  double score(std::size_t image, std::size_t c) const { return scores[image * classes.size() + c]; }
  Label label(std::size_t image, std::size_t c) const { return labels[image * classes.size() + c]; }

  void check() const {
    if (classes.empty()) throw ValidationError("eval", "no classes");
    if (scores.size() != images() * classes.size() || labels.size() != scores.size()) {
      throw ValidationError("eval", "score and label arrays are not congruent");
    }
  }
};

// Non-interpolated AP: scores sorted descending (ties keep input order), AP
// is the mean over positives of precision at each positive's rank. Returns
// nullopt when there is no positive.
inline std::optional<double> average_precision(std::span<const double> scores,
                                               std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("average_precision", "scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      hits += 1.0;
      sum += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0.0) return std::nullopt;
  return sum / hits;
}

struct EvalOptions {
  // Drop unannotated (image, class) cells instead of counting them negative.
  bool exclude_unannotated = false;
  std::optional<std::set<TagId>> class_filter;
};

struct ClassAp {
  TagId tag_id = 0;
  double ap = 0.0;
  std::size_t positives = 0;
};

struct SkippedClass {
  TagId tag_id = 0;
  std::string reason;  // "filtered" or "no positives"
};

struct MapReport {
  std::vector<ClassAp> per_class;
  std::vector<SkippedClass> skipped;
  double map = 0.0;
};

namespace detail {

// Scores and binary labels of one class after applying the unannotated rule.
inline void class_column(const EvalInstance& inst, std::size_t c, bool exclude_unannotated,
                         std::vector<double>& scores, std::vector<std::uint8_t>& labels) {
  scores.clear();
  labels.clear();
  for (std::size_t i = 0; i < inst.images(); ++i) {
    const Label l = inst.label(i, c);
    if (l == Label::kUnannotated && exclude_unannotated) continue;
    scores.push_back(inst.score(i, c));
    labels.push_back(l == Label::kPositive ? 1 : 0);
  }
}

}  // namespace detail

inline MapReport mean_ap(const EvalInstance& inst, const EvalOptions& options = {}) {
  inst.check();
  if (inst.images() == 0) throw ValidationError("eval", "no images");
  MapReport report;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  double sum = 0.0;
  for (std::size_t c = 0; c < inst.classes.size(); ++c) {
    const TagId id = inst.classes[c];
    if (options.class_filter && !options.class_filter->count(id)) {
      report.skipped.push_back({id, "filtered"});
      continue;
    }
    detail::class_column(inst, c, options.exclude_unannotated, scores, labels);
    const auto ap = average_precision(scores, labels);
    if (!ap) {
      report.skipped.push_back({id, "no positives"});
      continue;
    }
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    report.per_class.push_back({id, *ap, positives});
    sum += *ap;
  }
  if (report.per_class.empty()) throw Error("all classes skipped; mAP is undefined");
  report.map = sum / static_cast<double>(report.per_class.size());
  return report;
}

struct ClassPr {
  TagId tag_id = 0;
  Confusion counts;
  double precision = 1.0;
  double recall = 0.0;
};

struct PrReport {
  double micro_precision = 1.0;
  double micro_recall = 1.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  std::size_t macro_classes = 0;  // classes with >= 1 positive
  std::vector<ClassPr> per_class;
};

// Predictions are score >= effective threshold. Precision with no predicted
// positive is 1; micro recall with no positive at all is 1. Macro averages
// run over classes with at least one positive (both 0 if there are none).
inline PrReport precision_recall(const EvalInstance& inst, const ThresholdProfile& profile,
                                 const EvalOptions& options = {}) {
  inst.check();
  if (inst.images() == 0) throw ValidationError("eval", "no images");
  PrReport report;
  Confusion total;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  double p_sum = 0.0;
  double r_sum = 0.0;
  for (std::size_t c = 0; c < inst.classes.size(); ++c) {
    const TagId id = inst.classes[c];
    if (options.class_filter && !options.class_filter->count(id)) continue;
    detail::class_column(inst, c, options.exclude_unannotated, scores, labels);
    ClassPr pr;
    pr.tag_id = id;
    pr.counts = confusion_at(scores, labels, profile.effective(id));
    const auto tp = static_cast<double>(pr.counts.tp);
    pr.precision = pr.counts.tp + pr.counts.fp == 0 ? 1.0 : tp / static_cast<double>(pr.counts.tp + pr.counts.fp);
    const std::uint64_t pos = pr.counts.tp + pr.counts.fn;
    pr.recall = pos == 0 ? 0.0 : tp / static_cast<double>(pos);
    if (pos > 0) {
      p_sum += pr.precision;
      r_sum += pr.recall;
      ++report.macro_classes;
    }
    total.tp += pr.counts.tp;
    total.fp += pr.counts.fp;
    total.fn += pr.counts.fn;
    report.per_class.push_back(pr);
  }
  const auto tp = static_cast<double>(total.tp);
  report.micro_precision =
      total.tp + total.fp == 0 ? 1.0 : tp / static_cast<double>(total.tp + total.fp);
  report.micro_recall = total.tp + total.fn == 0 ? 1.0 : tp / static_cast<double>(total.tp + total.fn);
  if (report.macro_classes > 0) {
    report.macro_precision = p_sum / static_cast<double>(report.macro_classes);
    report.macro_recall = r_sum / static_cast<double>(report.macro_classes);
  }
  return report;
}

// Builds an instance from prediction and ground-truth JSONL:
//   {"image_id": ..., "scores": {"<tag_id>": score, ...}}
//   {"image_id": ..., "positive": [tag_id...], "negative": [tag_id...]}
// Images are those of the ground truth; classes are every tag id named in
// either file. Class ids listed in neither list of an image are unannotated.
inline EvalInstance read_eval_instance(std::string_view predictions_jsonl,
                                       std::string_view ground_truth_jsonl) {
  std::map<std::string, std::map<TagId, double>> preds;
  std::map<std::string, std::map<TagId, Label>> truth;
  std::set<TagId> classes;
  auto parse_lines = [](std::string_view text, const std::string& what, auto&& fn) {
    std::size_t n = 0;
    for (std::string_view line : detail::lines_of(text)) {
      ++n;
      if (detail::trim(line).empty()) continue;
      const std::string where = what + " line " + std::to_string(n);
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("image_id") ||
          !j["image_id"].is_string()) {
        throw ValidationError(where, "expected an object with image_id");
      }
      fn(j, where);
    }
  };
  parse_lines(predictions_jsonl, "predictions", [&](const nlohmann::json& j, const std::string& where) {
    auto& row = preds[j["image_id"].get<std::string>()];
    if (!j.contains("scores") || !j["scores"].is_object()) throw ValidationError(where, "missing scores");
    for (const auto& [key, value] : j["scores"].items()) {
      const auto id = static_cast<TagId>(detail::parse_int(key, where));
      if (!value.is_number()) throw ValidationError(where, "non-numeric score");
      const double s = value.get<double>();
      if (std::isnan(s)) throw ValidationError(where, "NaN score");
      row[id] = s;
      classes.insert(id);
    }
  });
  parse_lines(ground_truth_jsonl, "ground truth", [&](const nlohmann::json& j, const std::string& where) {
    auto& row = truth[j["image_id"].get<std::string>()];
    for (const auto& [field, label] :
         {std::pair{"positive", Label::kPositive}, std::pair{"negative", Label::kNegative}}) {
      if (!j.contains(field)) continue;
      if (!j[field].is_array()) throw ValidationError(where, std::string(field) + " is not a list");
      for (const auto& v : j[field]) {
        if (!v.is_number_integer()) throw ValidationError(where, "tag ids must be integers");
        const auto id = v.get<TagId>();
        auto [it, inserted] = row.emplace(id, label);
        if (!inserted && it->second != label) {
          throw ValidationError(where, "tag " + std::to_string(id) + " both positive and negative");
        }
        classes.insert(id);
      }
    }
  });
  EvalInstance inst;
  inst.classes.assign(classes.begin(), classes.end());
  for (const auto& [image_id, labels] : truth) {
    inst.image_ids.push_back(image_id);
    auto p = preds.find(image_id);
    for (TagId id : inst.classes) {
      double s = -std::numeric_limits<double>::infinity();
      if (p != preds.end()) {
        auto it = p->second.find(id);
        if (it != p->second.end()) s = it->second;
      }
      auto l = labels.find(id);
      inst.scores.push_back(s);
      inst.labels.push_back(l == labels.end() ? Label::kUnannotated : l->second);
    }
  }
  return inst;
}

// Per-class table followed by a '#'-prefixed summary block.
inline std::string format_eval_report(const MapReport& map, const PrReport& pr) {
  std::map<TagId, const ClassPr*> pr_by_id;
  for (const auto& c : pr.per_class) pr_by_id[c.tag_id] = &c;
  std::string out = "tag_id\tap\tpositives\tprecision\trecall\n";
  for (const ClassAp& c : map.per_class) {
    out += std::to_string(c.tag_id) + '\t' + detail::format_double(c.ap) + '\t' +
           std::to_string(c.positives);
    auto it = pr_by_id.find(c.tag_id);
    if (it != pr_by_id.end()) {
      out += '\t' + detail::format_double(it->second->precision) + '\t' +
             detail::format_double(it->second->recall);
    } else {
      out += "\t\t";
    }
    out += '\n';
  }
  out += "#summary\n";
  out += "#mAP\t" + detail::format_double(map.map) + "\n";
  out += "#evaluated_classes\t" + std::to_string(map.per_class.size()) + "\n";
  out += "#skipped_classes\t" + std::to_string(map.skipped.size()) + "\n";
  for (const auto& s : map.skipped) {
    out += "#skipped\t" + std::to_string(s.tag_id) + "\t" + s.reason + "\n";
  }
  out += "#micro_precision\t" + detail::format_double(pr.micro_precision) + "\n";
  out += "#micro_recall\t" + detail::format_double(pr.micro_recall) + "\n";
  out += "#macro_precision\t" + detail::format_double(pr.macro_precision) + "\n";
  out += "#macro_recall\t" + detail::format_double(pr.macro_recall) + "\n";
  return out;
}

// Column-major view of an instance for threshold calibration; unannotated
// cells count as negatives unless excluded.
inline CalibrationData to_calibration_data(const EvalInstance& inst, bool exclude_unannotated) {
  inst.check();
  CalibrationData data;
  data.classes = inst.classes;
  data.scores.resize(inst.classes.size());
  data.labels.resize(inst.classes.size());
  for (std::size_t c = 0; c < inst.classes.size(); ++c) {
    detail::class_column(inst, c, exclude_unannotated, data.scores[c], data.labels[c]);
  }
  return data;
}

}  // namespace tagforge
