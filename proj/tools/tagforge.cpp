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

// tagforge: command-line driver for the tag-mining pipeline.
//
//   tagforge parse          captions JSONL -> parsed tags JSONL + frequency TSV
//   tagforge build-vocab    frequency TSV (+ seeds, synonyms) -> vocabulary TSV
//   tagforge build-queries  vocabulary + prompt embeddings -> label queries
//   tagforge tag            image embeddings -> thresholded tag ids and scores
//   tagforge engine ...     generate | clean | run
//   tagforge eval           mAP and precision/recall, optional calibration
//   tagforge stats          render and check an engine stats file
//   tagforge selftest       built-in property checks
//
// Every subcommand takes --config FILE with `key = value` lines; a flag given
// on the command line wins over the file. Keys are the long flag names with
// '-' replaced by '_'. Exit status: 0 ok, 1 data or validation error, 2 usage.

#include <cstdio>
#include <deque>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tagforge/tagforge.hpp"

namespace {

using namespace tagforge;

// Flag values collected per subcommand and folded over the config file.
class Settings {
 public:
  Settings(CLI::App* app, const std::string& seed_default) : app_(app) {
    app_->add_option("--config", config_, "key = value file; flags override it");
    text("--seed", seed_default.empty() ? "random seed (required)" : "random seed", seed_default);
    text("--workers", "worker threads", "1");
    text("--data-dir", "lexicon directory (default: $TAGFORGE_DATA_DIR, else the built-in data dir)", "",
         "lexicon_dir");
  }

  CLI::Option* text(const std::string& flag, const std::string& help, const std::string& def = "",
                    std::string key = "") {
    if (key.empty()) key = key_of(flag);
    std::string& slot = strings_.emplace_back(def);
    CLI::Option* opt = app_->add_option(flag, slot, help);
    if (!def.empty()) opt->default_str(def);
    items_.push_back({key, opt, [&slot] { return slot; }, def});
    return opt;
  }

  CLI::Option* list(const std::string& flag, const std::string& help) {
    auto& slot = lists_.emplace_back();
    CLI::Option* opt = app_->add_option(flag, slot, help)->delimiter(',');
    items_.push_back({key_of(flag), opt, [&slot] {
                        std::string joined;
                        for (const auto& s : slot) joined += (joined.empty() ? "" : ",") + s;
                        return joined;
                      },
                      ""});
    return opt;
  }

  CLI::Option* flag(const std::string& flag, const std::string& help) {
    CLI::Option* opt = app_->add_flag(flag, help);
    items_.push_back({key_of(flag), opt, [] { return std::string("on"); }, "off"});
    opt->default_str("off");
    return opt;
  }

  KeyValueConfig resolve() const {
    KeyValueConfig kv = config_.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_);
    for (const Item& item : items_) {
      if (item.opt->count() > 0) {
        kv.set(item.key, item.value());
      } else if (!kv.has(item.key) && !item.def.empty()) {
        kv.set(item.key, item.def);
      }
    }
    return kv;
  }

 private:
  struct Item {
    std::string key;
    CLI::Option* opt;
    std::function<std::string()> value;
    std::string def;
  };

  static std::string key_of(std::string flag) {
    flag = flag.substr(flag.find_first_not_of('-'));
    for (char& c : flag) c = c == '-' ? '_' : c;
    return flag;
  }

  CLI::App* app_;
  std::string config_;
  std::deque<std::string> strings_;
  std::deque<std::vector<std::string>> lists_;
  std::vector<Item> items_;
};

void write_output(const std::string& path, std::string_view content) {
  if (path == "-") {
    std::fwrite(content.data(), 1, content.size(), stdout);
    std::fflush(stdout);
  } else {
    detail::write_file(path, content);
  }
}

std::string require_file(const KeyValueConfig& kv, const std::string& key) {
  kv.require(key);
  return *kv.get_existing_path(key);
}

std::size_t workers_of(const KeyValueConfig& kv) { return kv.get_uint("workers", 1, 1, 1024); }

LexiconBundle lexicon_of(const KeyValueConfig& kv) {
  return LexiconBundle::load(resolve_data_dir(kv.get("lexicon_dir")));
}

// ---------------------------------------------------------------------------

int cmd_parse(const KeyValueConfig& kv) {
  const std::string input = require_file(kv, "captions");
  const LexiconBundle lex = lexicon_of(kv);
  const CorpusResult result = parse_corpus(detail::read_file(input), lex, workers_of(kv));
  write_output(kv.get_string("output", "-"), format_image_tags_jsonl(result.images));
  if (auto path = kv.get("frequency")) detail::write_file(*path, format_frequency_tsv(result.frequency));
  if (auto path = kv.get("rejects")) {
    std::string out;
    for (const Reject& r : result.rejects) {
      nlohmann::ordered_json j;
      j["line"] = r.line;
      j["reason"] = r.reason;
      out += j.dump() + "\n";
    }
    detail::write_file(*path, out);
  }
  std::cerr << "parse: " << result.records << " captions, " << result.images.size() << " images, "
            << result.frequency.size() << " distinct tags, " << result.rejects.size() << " rejected lines\n";
  return 0;
}

int cmd_build_vocab(const KeyValueConfig& kv) {
  const FrequencyTable freq = read_frequency_tsv(detail::read_file(require_file(kv, "frequency")));
  const std::size_t k = kv.get_uint("top_k", 1000, 0, UINT32_MAX);
  const LexiconBundle lex = lexicon_of(kv);
  auto norm = [&](const std::string& s) { return normalize_surface(s, lex); };

  std::vector<std::vector<std::string>> seeds;
  for (const std::string& path : kv.get_list("seed_lists")) {
    std::vector<std::string> list;
    for (const std::string& s : read_surface_list(detail::read_file(path))) list.push_back(norm(s));
    seeds.push_back(std::move(list));
  }
  std::vector<SynonymPair> synonyms;
  if (auto path = kv.get_existing_path("synonyms")) {
    for (const auto& [a, b] : read_synonyms(detail::read_file(*path))) synonyms.emplace_back(norm(a), norm(b));
  }
  std::set<std::string> excludes;
  if (auto path = kv.get_existing_path("excludes")) {
    for (const std::string& s : read_surface_list(detail::read_file(*path))) excludes.insert(norm(s));
  }
  const TagVocabulary vocab = build_label_system(freq, k, seeds, synonyms, excludes);
  write_output(kv.get_string("output", "-"), vocab.to_tsv());
  std::cerr << "build-vocab: " << vocab.size() << " surfaces, " << vocab.group_count() << " tag ids, version "
            << vocab.version() << "\n";
  return 0;
}

int cmd_build_queries(const KeyValueConfig& kv) {
  const TagVocabulary vocab = TagVocabulary::from_tsv(detail::read_file(require_file(kv, "vocab")));
  const auto templates = read_templates(detail::read_file(require_file(kv, "templates")));
  std::vector<std::string> names;
  for (const PromptTemplate& t : templates) names.push_back(t.name);

  if (auto path = kv.get("emit_prompts")) {
    // key<TAB>prompt text for an external text encoder
    std::string out;
    for (std::size_t id = 0; id < vocab.group_count(); ++id) {
      const std::string& c = vocab.canonical(static_cast<TagId>(id));
      for (const PromptTemplate& t : templates) out += prompt_key(t.name, c) + "\t" + t.render(c) + "\n";
    }
    write_output(*path, out);
    if (!kv.get("prompt_embeddings")) return 0;
  }
  const EmbeddingTable prompts = EmbeddingTable::load(require_file(kv, "prompt_embeddings"));
  const LabelQueryMatrix queries = build_label_queries(vocab, prompts, names);
  queries.save(kv.require("output"));
  std::cerr << "build-queries: " << queries.size() << " queries of dimension " << queries.dim() << "\n";
  return 0;
}

ThresholdProfile profile_of(const KeyValueConfig& kv) {
  ThresholdProfile profile;
  if (auto path = kv.get_existing_path("thresholds")) profile = ThresholdProfile::from_tsv(detail::read_file(*path));
  if (kv.get("threshold")) profile.default_threshold = kv.get_double("threshold", 0.2, -2.0, 2.0);
  return profile;
}

int cmd_tag(const KeyValueConfig& kv) {
  const LabelQueryMatrix queries = LabelQueryMatrix::load(require_file(kv, "queries"));
  if (auto path = kv.get_existing_path("vocab")) {
    const auto vocab = TagVocabulary::from_tsv(detail::read_file(*path));
    if (vocab.version() != queries.vocab_version) {
      throw ValidationError("queries", "built for vocabulary " + queries.vocab_version + ", not " + vocab.version());
    }
  }
  const ThresholdProfile profile = profile_of(kv);
  profile.validate(queries);
  EmbeddingTable images = EmbeddingTable::load(require_file(kv, "embeddings"));
  if (!images.normalized()) images = normalize(images);
  const bool with_scores = kv.get_bool("scores", true);

  std::vector<std::string> lines(images.size());
  parallel_for(images.size(), workers_of(kv), [&](std::size_t i) {
    const auto s = score(images.row(i), queries);
    nlohmann::ordered_json j;
    j["image_id"] = images.key(i);
    j["tag_ids"] = tag_from_scores(s, queries, profile);
    if (with_scores) {
      nlohmann::ordered_json scores = nlohmann::ordered_json::object();
      for (std::size_t r = 0; r < s.size(); ++r) scores[std::to_string(queries.tag_ids[r])] = s[r];
      j["scores"] = std::move(scores);
    }
    lines[i] = j.dump() + "\n";
  });
  std::string out;
  for (const auto& l : lines) out += l;
  write_output(kv.get_string("output", "-"), out);
  return 0;
}

enum class EngineMode { kGenerate, kClean, kRun };

int cmd_engine(KeyValueConfig kv, EngineMode mode) {
  if (mode == EngineMode::kGenerate) {
    kv.set("outlier_cleaning", "off");
    kv.set("prediction_filter", "off");
  } else if (mode == EngineMode::kClean) {
    kv.set("generation", "off");
  }
  const EngineConfig cfg = EngineConfig::from(kv);
  try {
    const EngineRun run = run_engine(cfg);
    write_engine_outputs(run, cfg);
    write_output("-", format_stats_tsv(run.stats));
    if (!run.filter_skipped.empty()) {
      std::cerr << "engine: " << run.filter_skipped.size() << " pairs skipped by the prediction filter\n";
      for (const FilterSkip& s : run.filter_skipped) {
        std::cerr << "  " << s.image_id << "\t" << s.tag_id << "\t" << s.reason << "\n";
      }
    }
    if (!run.caption_rejects.empty()) {
      std::cerr << "engine: " << run.caption_rejects.size() << " caption lines rejected\n";
    }
    if (run.rejected_generated) {
      std::cerr << "engine: " << run.rejected_generated << " generated or seed tags with unknown ids rejected\n";
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (!e.partial().empty()) std::cerr << format_stats_tsv(e.partial());
    return 1;
  }
  return 0;
}

std::vector<double> parse_grid(const std::string& text) {
  const auto parts = detail::split(text, ':');
  if (parts.size() != 3) throw ValidationError("calibrate", "expected lo:hi:step");
  const double lo = detail::parse_double(parts[0], "calibrate");
  const double hi = detail::parse_double(parts[1], "calibrate");
  const double step = detail::parse_double(parts[2], "calibrate");
  if (!(step > 0) || !(hi >= lo) || (hi - lo) / step > 1e6) {
    throw ValidationError("calibrate", "need lo <= hi and a positive step");
  }
  std::vector<double> grid;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  return grid;
}

int cmd_eval(const KeyValueConfig& kv) {
  const EvalInstance inst = read_eval_instance(detail::read_file(require_file(kv, "predictions")),
                                               detail::read_file(require_file(kv, "ground_truth")));
  EvalOptions opt;
  opt.exclude_unannotated = kv.get_bool("exclude_unannotated", false);
  if (auto path = kv.get_existing_path("classes")) {
    std::set<TagId> ids;
    for (const std::string& s : read_surface_list(detail::read_file(*path))) {
      ids.insert(static_cast<TagId>(detail::parse_int(s, "classes")));
    }
    opt.class_filter = std::move(ids);
  }
  const ThresholdProfile profile = profile_of(kv);
  const MapReport map = mean_ap(inst, opt);
  const PrReport pr = precision_recall(inst, profile, opt);
  write_output(kv.get_string("output", "-"), format_eval_report(map, pr));
  if (auto grid = kv.get("calibrate")) {
    CalibrationData data = to_calibration_data(inst, opt.exclude_unannotated);
    if (opt.class_filter) {
      CalibrationData kept;
      for (std::size_t c = 0; c < data.classes.size(); ++c) {
        if (!opt.class_filter->count(data.classes[c])) continue;
        kept.classes.push_back(data.classes[c]);
        kept.scores.push_back(std::move(data.scores[c]));
        kept.labels.push_back(std::move(data.labels[c]));
      }
      data = std::move(kept);
    }
    const ThresholdProfile calibrated = calibrate_thresholds(data, parse_grid(*grid));
    detail::write_file(kv.require("calibration_output"), calibrated.to_tsv());
  }
  return 0;
}

int cmd_stats(const KeyValueConfig& kv) {
  const auto rows = read_stats_tsv(detail::read_file(require_file(kv, "stats")));
  const auto bad = conservation_violation(rows);
  std::vector<std::vector<std::string>> table = {
      {"stage", "images", "tags", "added", "removed_outlier", "removed_no_prediction", "removed_contrary", "check"}};
  std::size_t prev = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const StageStats& s = rows[i];
    const long delta = static_cast<long>(s.tags) - static_cast<long>(prev);
    table.push_back({s.stage, std::to_string(s.images), std::to_string(s.tags), std::to_string(s.added),
                     std::to_string(s.removed_outlier), std::to_string(s.removed_no_prediction),
                     std::to_string(s.removed_contrary),
                     (bad && *bad == i ? "MISMATCH " : "ok ") + std::string(delta >= 0 ? "+" : "") +
                         std::to_string(delta)});
    prev = s.tags;
  }
  std::vector<std::size_t> width(table[0].size(), 0);
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      out += c == 0 ? row[c] + pad : "  " + pad + row[c];
    }
    out += "\n";
  }
  if (auto path = kv.get_existing_path("audit")) {
    std::map<std::string, std::size_t> by_reason;
    for (const AuditEvent& e : read_audit_jsonl(detail::read_file(*path))) ++by_reason[e.reason];
    std::size_t removed_outlier = 0, removed_no_prediction = 0, removed_contrary = 0, added = 0;
    for (const StageStats& s : rows) {
      removed_outlier += s.removed_outlier;
      removed_no_prediction += s.removed_no_prediction;
      removed_contrary += s.removed_contrary;
      if (s.stage != stage::kParseMerge) added += s.added;
    }
    const bool agrees = by_reason["generated"] == added && by_reason["outlier"] == removed_outlier &&
                        by_reason["no_prediction"] == removed_no_prediction &&
                        by_reason["contrary"] == removed_contrary;
    out += std::string("audit: ") + (agrees ? "agrees with stats" : "DISAGREES with stats") + "\n";
    if (!agrees) {
      write_output("-", out);
      return 1;
    }
  }
  write_output("-", out);
  if (bad) {
    std::cerr << "error: stage " << rows[*bad].stage << " does not reconcile\n";
    return 1;
  }
  return 0;
}

int cmd_selftest(const KeyValueConfig& kv) {
  const std::uint64_t seed = kv.get_uint("seed", 0, 0, UINT64_MAX);
  const std::size_t trials = kv.get_uint("trials", 100, 1, 1000000);
  std::optional<LexiconBundle> lex;
  try {
    lex = lexicon_of(kv);
  } catch (const std::exception& e) {
    std::cerr << "selftest: lexicon suite skipped: " << e.what() << "\n";
  }
  const auto results = selftest::run_all(seed, trials, lex ? &*lex : nullptr);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << r.name << " (" << r.cases << " cases)";
    if (!r.passed) std::cout << ": " << r.detail;
    std::cout << "\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

// Flags shared by the three engine subcommands.
void engine_flags(Settings& s) {
  s.text("--vocab", "vocabulary TSV");
  s.text("--captions", "original captions JSONL (parsed on the fly)");
  s.text("--parsed", "parsed tags JSONL from `tagforge parse`");
  s.text("--annotations", "tag annotations JSONL (tag ids)");
  s.text("--seed-annotations", "extra seed tag ids JSONL");
  s.list("--generated-tags", "generated tag id JSONL files");
  s.list("--generated-captions", "generated caption JSONL files");
  s.text("--regions", "regions JSONL");
  s.text("--region-embeddings", "region embeddings (EMB1)");
  s.text("--image-embeddings", "whole-image embeddings (EMB1), enables the contrary check");
  s.text("--queries", "label queries (EMB1 + .meta.json)");
  s.text("--thresholds", "threshold profile TSV");
  s.text("--threshold", "default threshold override");
  s.text("--whitelist", "categories to clean, tag ids or surfaces (default: all)");
  s.text("--generation", "run the generation stage", "on");
  s.text("--outlier-cleaning", "run outlier cleaning", "on");
  s.text("--prediction-filter", "run the prediction filter", "on");
  s.text("--fraction", "outlier fraction per category", "0.1");
  s.text("--min-regions", "categories with fewer regions are skipped", "20");
  s.text("--max-k", "upper bound on clusters per category", "8");
  s.text("--tol", "Lloyd convergence tolerance", "0.0001");
  s.text("--max-iter", "Lloyd iteration cap", "100");
  s.text("--outlier-scope", "category or cluster", "category");
  s.text("--margin", "contrary-prediction margin", "0.05");
  s.text("--output", "final annotations JSONL");
  s.text("--audit", "audit JSONL");
  s.text("--stats", "stats TSV");
  s.text("--category-stats", "per-category cleaning TSV");
  s.text("--parsed-output", "annotations after parse-merge JSONL");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tagforge: caption tag mining, tag vocabulary and annotation cleaning"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::deque<Settings> settings;
  std::function<int()> action;

  auto add = [&](CLI::App* parent, const std::string& name, const std::string& help,
                 const std::string& seed_default = "0") {
    CLI::App* sub = parent->add_subcommand(name, help);
    Settings& s = settings.emplace_back(sub, seed_default);
    return std::pair<CLI::App*, Settings*>{sub, &s};
  };

  {
    auto [sub, s] = add(&app, "parse", "parse captions into object, attribute and action tags");
    s->text("--captions", "captions JSONL {image_id, caption, source}");
    s->text("--output", "parsed tags JSONL ('-' for stdout)", "-");
    s->text("--frequency", "tag frequency TSV");
    s->text("--rejects", "rejected lines JSONL");
    sub->callback([&action, s = s] { action = [s] { return cmd_parse(s->resolve()); }; });
  }
  {
    auto [sub, s] = add(&app, "build-vocab", "build the label system from tag frequencies");
    s->text("--frequency", "frequency TSV from `tagforge parse`");
    s->text("--top-k", "most frequent corpus tags kept", "1000");
    s->list("--seed-lists", "seed surface lists, one surface per line");
    s->text("--synonyms", "synonym pairs TSV (a<TAB>b)");
    s->text("--excludes", "surfaces to drop");
    s->text("--output", "vocabulary TSV ('-' for stdout)", "-");
    sub->callback([&action, s = s] { action = [s] { return cmd_build_vocab(s->resolve()); }; });
  }
  {
    auto [sub, s] = add(&app, "build-queries", "ensemble prompt embeddings into label queries");
    s->text("--vocab", "vocabulary TSV");
    s->text("--templates", "prompt templates TSV (name<TAB>prompt with {tag})");
    s->text("--prompt-embeddings", "prompt embeddings (EMB1) keyed template::canonical");
    s->text("--emit-prompts", "write key<TAB>prompt lines for an encoder ('-' for stdout)");
    s->text("--output", "label queries (EMB1; a .meta.json sidecar is written next to it)");
    sub->callback([&action, s = s] { action = [s] { return cmd_build_queries(s->resolve()); }; });
  }
  {
    auto [sub, s] = add(&app, "tag", "score image embeddings against label queries");
    s->text("--queries", "label queries (EMB1 + .meta.json)");
    s->text("--embeddings", "image embeddings (EMB1)");
    s->text("--vocab", "vocabulary TSV to check the queries against");
    s->text("--thresholds", "threshold profile TSV");
    s->text("--threshold", "default threshold", "0.2");
    s->text("--scores", "include per-tag scores", "on");
    s->text("--output", "predictions JSONL ('-' for stdout)", "-");
    sub->callback([&action, s = s] { action = [s] { return cmd_tag(s->resolve()); }; });
  }
  {
    CLI::App* engine = app.add_subcommand("engine", "tagging data engine");
    engine->require_subcommand(1);
    const std::pair<const char*, EngineMode> modes[] = {
        {"generate", EngineMode::kGenerate}, {"clean", EngineMode::kClean}, {"run", EngineMode::kRun}};
    const char* helps[] = {"parse-merge and generation only", "cleaning stages only", "every enabled stage"};
    for (std::size_t i = 0; i < 3; ++i) {
      auto [sub, s] = add(engine, modes[i].first, helps[i], "");
      engine_flags(*s);
      const EngineMode mode = modes[i].second;
      sub->callback([&action, s = s, mode] { action = [s, mode] { return cmd_engine(s->resolve(), mode); }; });
    }
  }
  {
    auto [sub, s] = add(&app, "eval", "mAP and precision/recall of predictions");
    s->text("--predictions", "predictions JSONL {image_id, scores}");
    s->text("--ground-truth", "ground truth JSONL {image_id, positive, negative}");
    s->text("--thresholds", "threshold profile TSV");
    s->text("--threshold", "default threshold");
    s->flag("--exclude-unannotated", "drop unannotated cells instead of counting them negative");
    s->text("--classes", "tag ids to evaluate, one per line (default: all)");
    s->text("--output", "report TSV ('-' for stdout)", "-");
    s->text("--calibrate", "fit thresholds over the grid lo:hi:step");
    s->text("--calibration-output", "calibrated threshold profile TSV");
    sub->callback([&action, s = s] { action = [s] { return cmd_eval(s->resolve()); }; });
  }
  {
    auto [sub, s] = add(&app, "stats", "render engine stats and check tag accounting");
    s->text("--stats", "stats TSV from an engine run");
    s->text("--audit", "audit JSONL to cross-check");
    sub->callback([&action, s = s] { action = [s] { return cmd_stats(s->resolve()); }; });
  }
  {
    auto [sub, s] = add(&app, "selftest", "run the built-in property checks");
    s->text("--trials", "random cases per suite", "100");
    sub->callback([&action, s = s] { action = [s] { return cmd_selftest(s->resolve()); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    return action ? action() : 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
