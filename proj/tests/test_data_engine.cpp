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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tagforge/data_engine.hpp"

namespace tagforge {
namespace {

TagVocabulary vocab_of(std::size_t n) {
  FrequencyTable freq;
  for (std::size_t i = 0; i < n; ++i) {
    // zero-padded so that lexicographic order matches numeric order
    std::string s = "tag" + std::to_string(100 + i);
    freq.emplace_back(s, 1);
  }
  return build_label_system(freq, n, {}, {}, {});
}

std::vector<double> axis(std::size_t dim, std::size_t d) {
  std::vector<double> v(dim, 0.0);
  v[d] = 1.0;
  return v;
}

std::vector<double> unit(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  for (double& x : v) x /= std::sqrt(sq);
  return v;
}

// Query for tag i is the i-th axis.
LabelQueryMatrix axis_queries(const TagVocabulary& vocab, std::size_t dim) {
  EmbeddingTable prompts(dim, true);
  for (std::size_t id = 0; id < vocab.group_count(); ++id) {
    prompts.add(prompt_key("t", vocab.canonical(static_cast<TagId>(id))), axis(dim, id));
  }
  return build_label_queries(vocab, prompts, {"t"});
}

TEST(GenerateMerge, EmptyGeneratedIsIdentity) {
  const auto vocab = vocab_of(3);
  AnnotationSet parsed;
  parsed.add("a", 0, Provenance::kParsed);
  parsed.add("b", 2, Provenance::kSeed);
  const auto r = generate_merge(parsed, {}, {}, vocab);
  EXPECT_TRUE(r.merged.same_kept(parsed));
  EXPECT_TRUE(r.added.empty());
  EXPECT_EQ(r.rejected, 0u);
}

TEST(GenerateMerge, UnionWithParsedPriority) {
  const auto vocab = vocab_of(3);  // 0 = dog, 1 = ball
  AnnotationSet parsed;
  parsed.add("img", 0, Provenance::kParsed);
  const auto r = generate_merge(parsed, {{{"img", {0, 1}}}}, {{"img", {1}}, {"new", {2, 9}}}, vocab);
  ASSERT_NE(r.merged.find("img", 0), nullptr);
  EXPECT_EQ(r.merged.find("img", 0)->provenance, Provenance::kParsed);
  EXPECT_EQ(r.merged.find("img", 1)->provenance, Provenance::kGenerated);
  EXPECT_EQ(r.merged.find("new", 2)->provenance, Provenance::kGenerated);
  EXPECT_EQ(r.added, (std::vector<ImageTag>{{"img", 1}, {"new", 2}}));
  EXPECT_EQ(r.rejected, 1u);
  EXPECT_EQ(r.merged.kept_tags(), parsed.kept_tags() + r.added.size());
}

TEST(GenerateMerge, CountsNeverShrink) {
  std::mt19937_64 gen(1);
  const auto vocab = vocab_of(20);
  for (int trial = 0; trial < 50; ++trial) {
    AnnotationSet parsed;
    TagIdLists gen_tags, cap_tags;
    for (int i = 0; i < 30; ++i) {
      const std::string img = "i" + std::to_string(gen() % 40);
      parsed.add(img, static_cast<TagId>(gen() % 20), Provenance::kParsed);
      gen_tags.push_back({"i" + std::to_string(gen() % 40), {static_cast<TagId>(gen() % 25)}});
      cap_tags.push_back({"i" + std::to_string(gen() % 40), {static_cast<TagId>(gen() % 20)}});
    }
    const auto r = generate_merge(parsed, {gen_tags}, cap_tags, vocab);
    for (const auto& [img, entries] : parsed.images()) {
      EXPECT_GE(r.merged.images().at(img).size(), entries.size());
      for (const auto& e : entries) EXPECT_EQ(r.merged.find(img, e.tag_id)->provenance, e.provenance);
    }
    EXPECT_EQ(r.merged.kept_tags(), parsed.kept_tags() + r.added.size());
  }
}

TEST(Annotations, JsonlRoundTrip) {
  const auto vocab = vocab_of(4);
  AnnotationSet set;
  set.add("b", 3, Provenance::kGenerated);
  set.add("a", 1, Provenance::kParsed);
  set.add("a", 0, Provenance::kSeed);
  set.add("c", 2, Provenance::kParsed);
  EXPECT_FALSE(set.add("a", 1, Provenance::kGenerated));
  EXPECT_TRUE(set.remove("c", 2, TagState::kRemovedOutlier));
  EXPECT_FALSE(set.remove("c", 2, TagState::kRemovedContrary));
  const std::string text = format_annotations_jsonl(set);
  EXPECT_EQ(text,
            "{\"image_id\":\"a\",\"tags\":[{\"tag_id\":0,\"provenance\":\"seed\"},"
            "{\"tag_id\":1,\"provenance\":\"parsed\"}]}\n"
            "{\"image_id\":\"b\",\"tags\":[{\"tag_id\":3,\"provenance\":\"generated\"}]}\n");
  EXPECT_EQ(format_annotations_jsonl(read_annotations_jsonl(text, vocab)), text);
  EXPECT_THROW(read_annotations_jsonl("{\"image_id\":\"a\",\"tags\":[{\"tag_id\":7}]}\n", vocab),
               ValidationError);
  EXPECT_THROW(read_annotations_jsonl("{\"tags\":[]}\n", vocab), ValidationError);
}

TEST(Regions, Reader) {
  const auto r = read_regions_jsonl(
      "{\"image_id\":\"a\",\"region_id\":\"r1\",\"tag_id\":0,\"score\":0.9,\"embedding_key\":\"a/r1\"}\n"
      "{\"image_id\":\"a\",\"region_id\":2,\"tag_id\":1,\"score\":0.5,\"embedding_key\":\"a/2\"}\n");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[1].region_id, "2");
  EXPECT_THROW(read_regions_jsonl("{\"image_id\":\"a\",\"region_id\":\"r\",\"tag_id\":0,\"score\":1.5,"
                                  "\"embedding_key\":\"k\"}\n"),
               ValidationError);
  EXPECT_THROW(read_regions_jsonl("{\"image_id\":\"a\",\"region_id\":\"r\",\"tag_id\":0,\"embedding_key\":\"k\"}\n"
                                  "{\"image_id\":\"a\",\"region_id\":\"r\",\"tag_id\":1,\"embedding_key\":\"j\"}\n"),
               ValidationError);
  EXPECT_THROW(read_regions_jsonl("{\"image_id\":\"a\"}\n"), ValidationError);
}

TEST(CleanCategory, Heuristics) {
  EXPECT_EQ(outlier_quota(0.1, 300), 30u);
  EXPECT_EQ(outlier_quota(0.1, 301), 31u);
  EXPECT_EQ(outlier_quota(0.0, 300), 0u);
  EXPECT_EQ(outlier_quota(0.1, 20), 2u);
  EXPECT_EQ(cluster_count(1), 1u);
  EXPECT_EQ(cluster_count(20), 3u);
  EXPECT_EQ(cluster_count(50), 5u);
  EXPECT_EQ(cluster_count(300), 8u);
  EXPECT_EQ(cluster_count(300, 4), 4u);
}

struct Category {
  std::vector<RegionRecord> regions;
  EmbeddingTable embeddings{8, true};
  std::set<std::string> noise_keys;
};

// Three tight clusters of inliers plus distant noise regions, one region per
// image.
Category planted(std::mt19937_64& gen, std::size_t inliers, std::size_t noise) {
  std::normal_distribution<double> nd;
  Category c;
  const std::size_t dim = 8;
  for (std::size_t i = 0; i < inliers + noise; ++i) {
    std::vector<double> v(dim, 0.0);
    if (i < inliers) {
      v[i % 3] = 1.0;
      for (double& x : v) x += 0.01 * nd(gen);
    } else {
      for (std::size_t d = 3; d < dim; ++d) v[d] = nd(gen);
    }
    const std::string key = "k" + std::to_string(i);
    if (i >= inliers) c.noise_keys.insert(key);
    c.embeddings.add(key, unit(v));
    c.regions.push_back({"img" + std::to_string(1000 + i), "r0", 0, 0.9, key});
  }
  std::shuffle(c.regions.begin(), c.regions.end(), gen);
  return c;
}

TEST(CleanCategory, FractionZeroRemovesNothing) {
  std::mt19937_64 gen(2);
  const auto c = planted(gen, 90, 10);
  CleaningOptions o;
  o.fraction = 0.0;
  const auto r = clean_category(0, c.regions, c.embeddings, 1, o);
  EXPECT_FALSE(r.skipped);
  EXPECT_TRUE(r.outliers.empty());
  EXPECT_TRUE(r.removals.empty());
}

TEST(CleanCategory, ExactQuotaAndPlantedNoise) {
  std::mt19937_64 gen(3);
  int trials_ok = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = planted(gen, 270, 30);
    const auto r = clean_category(static_cast<TagId>(trial), c.regions, c.embeddings, 7);
    EXPECT_EQ(r.outliers.size(), 30u);
    EXPECT_EQ(r.k, 8u);
    std::size_t noise_hit = 0;
    for (std::size_t i : r.outliers) noise_hit += c.noise_keys.count(c.regions[i].embedding_key);
    EXPECT_GE(noise_hit, 24u) << trial;
    trials_ok += noise_hit >= 24;
    EXPECT_EQ(r.removals.size(), 30u);  // one region per image
  }
  EXPECT_EQ(trials_ok, 20);
}

TEST(CleanCategory, PairSurvivesWithOneInlier) {
  std::mt19937_64 gen(4);
  auto c = planted(gen, 90, 10);
  // every noisy image also gets one inlier region
  std::size_t extra = 0;
  for (const auto& key : c.noise_keys) {
    const auto it = std::find_if(c.regions.begin(), c.regions.end(),
                                 [&](const RegionRecord& r) { return r.embedding_key == key; });
    const std::string image = it->image_id;
    const std::string extra_key = "x" + std::to_string(extra++);
    c.embeddings.add(extra_key, axis(8, 0));
    c.regions.push_back({image, "r1", 0, 0.9, extra_key});
  }
  const auto r = clean_category(0, c.regions, c.embeddings, 5);
  EXPECT_EQ(r.outliers.size(), 11u);
  for (const auto& [image, tag] : r.removals) {
    std::set<std::string> region_keys;
    for (const auto& reg : c.regions) {
      if (reg.image_id == image) region_keys.insert(reg.embedding_key);
    }
    EXPECT_EQ(region_keys.size(), 1u) << image;
  }
}

TEST(CleanCategory, SkipsSmallCategoriesAndChecksKeys) {
  std::mt19937_64 gen(5);
  const auto small = planted(gen, 15, 4);
  const auto r = clean_category(0, small.regions, small.embeddings, 1);
  EXPECT_TRUE(r.skipped);
  EXPECT_TRUE(r.removals.empty());

  auto c = planted(gen, 30, 0);
  c.regions[3].embedding_key = "absent";
  EXPECT_THROW(clean_category(0, c.regions, c.embeddings, 1), EmbeddingError);
  CleaningOptions bad;
  bad.fraction = 1.0;
  EXPECT_THROW(clean_category(0, c.regions, c.embeddings, 1, bad), ValidationError);
}

TEST(CleanCategory, DeterministicAndOrderIndependent) {
  std::mt19937_64 gen(6);
  auto c = planted(gen, 200, 20);
  const auto a = clean_category(3, c.regions, c.embeddings, 42);
  const auto b = clean_category(3, c.regions, c.embeddings, 42);
  EXPECT_EQ(a.outliers, b.outliers);
  EXPECT_EQ(a.removals, b.removals);
  auto shuffled = c.regions;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  const auto s = clean_category(3, shuffled, c.embeddings, 42);
  EXPECT_EQ(s.removals, a.removals);
  EXPECT_EQ(s.inertia, a.inertia);
}

TEST(CleanCategory, ClusterScopeQuotaPerCluster) {
  std::mt19937_64 gen(7);
  const auto c = planted(gen, 270, 30);
  CleaningOptions o;
  o.scope = OutlierScope::kCluster;
  const auto r = clean_category(1, c.regions, c.embeddings, 9, o);
  EXPECT_GE(r.outliers.size(), 30u);
  EXPECT_LE(r.outliers.size(), 30u + r.k);
}

TEST(PredictionFilter, Examples) {
  const auto vocab = vocab_of(3);
  const auto q = axis_queries(vocab, 4);
  AnnotationSet set;
  set.add("keep", 0, Provenance::kParsed);
  set.add("zero", 1, Provenance::kParsed);
  set.add("contrary", 2, Provenance::kGenerated);
  set.add("noregion", 0, Provenance::kParsed);
  set.add("missing", 0, Provenance::kParsed);
  EmbeddingTable reg(4, true);
  reg.add("keep/r", axis(4, 0));
  reg.add("zero/r", axis(4, 3));
  reg.add("contrary/r", axis(4, 3));
  const std::vector<RegionRecord> regions = {
      {"keep", "r", 0, 1, "keep/r"},
      {"zero", "r", 1, 1, "zero/r"},
      {"contrary", "r", 2, 1, "contrary/r"},
      {"missing", "r", 0, 1, "absent"},
      {"unannotated", "r", 1, 1, "zero/r"},
  };
  EmbeddingTable img(4, true);
  for (const char* id : {"keep", "zero", "missing"}) img.add(id, axis(4, 3));
  img.add("contrary", axis(4, 2));
  ThresholdProfile p;  // 0.2
  const auto r = prediction_filter(set, regions, reg, &img, q, p);
  ASSERT_EQ(r.removals.size(), 2u);
  EXPECT_EQ(r.removals[0].image_id, "contrary");
  EXPECT_EQ(r.removals[0].reason, TagState::kRemovedContrary);
  EXPECT_EQ(r.removals[1].image_id, "zero");
  EXPECT_EQ(r.removals[1].reason, TagState::kRemovedNoPrediction);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].image_id, "missing");

  // without whole-image embeddings the contrary pair is a plain miss
  const auto plain = prediction_filter(set, regions, reg, nullptr, q, p);
  EXPECT_EQ(plain.removals[0].reason, TagState::kRemovedNoPrediction);

  // region score inside the margin band is no prediction, not contrary
  EmbeddingTable band(4, true);
  band.add("contrary/r", unit({0, 0, 0.18, std::sqrt(1 - 0.18 * 0.18)}));
  const auto b = prediction_filter(set, {regions[2]}, band, &img, q, p);
  ASSERT_EQ(b.removals.size(), 1u);
  EXPECT_EQ(b.removals[0].reason, TagState::kRemovedNoPrediction);

  const std::set<TagId> only0 = {0};
  EXPECT_TRUE(prediction_filter(set, regions, reg, &img, q, p, {}, &only0).removals.empty());
}

TEST(PredictionFilter, RemovesEveryPlantedFalseTag) {
  std::mt19937_64 gen(8);
  const std::size_t tags = 6, dim = 8;
  const auto vocab = vocab_of(tags);
  const auto q = axis_queries(vocab, dim);
  AnnotationSet set;
  std::vector<RegionRecord> regions;
  EmbeddingTable reg(dim, true);
  std::set<ImageTag> planted_false;
  for (int i = 0; i < 200; ++i) {
    const std::string img = "img" + std::to_string(i);
    for (TagId t = 0; t < static_cast<TagId>(tags); ++t) {
      const double u = std::uniform_real_distribution<double>(0, 1)(gen);
      if (u > 0.5) continue;
      const bool is_false = u < 0.1;
      set.add(img, t, is_false ? Provenance::kGenerated : Provenance::kParsed);
      const std::string key = img + "/" + std::to_string(t);
      // false tags: region orthogonal to the tag's query
      reg.add(key, is_false ? axis(dim, tags + static_cast<std::size_t>(gen() % 2)) : axis(dim, static_cast<std::size_t>(t)));
      regions.push_back({img, std::to_string(t), t, 0.8, key});
      if (is_false) planted_false.insert({img, t});
    }
  }
  const auto r = prediction_filter(set, regions, reg, nullptr, q, ThresholdProfile{});
  std::set<ImageTag> removed;
  for (const auto& d : r.removals) removed.insert({d.image_id, d.tag_id});
  EXPECT_EQ(removed, planted_false);
  EXPECT_FALSE(planted_false.empty());
}

}  // namespace
}  // namespace tagforge
