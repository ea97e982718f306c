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
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tagforge/similarity_tagger.hpp"
#include "test_util.hpp"

namespace tagforge {
namespace {

std::vector<double> random_unit(std::mt19937_64& gen, std::size_t dim) {
  std::normal_distribution<double> nd;
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = nd(gen);
    sq += x * x;
  }
  for (double& x : v) x /= std::sqrt(sq);
  return v;
}

TagVocabulary vocab_of(const std::vector<std::string>& surfaces) {
  FrequencyTable freq;
  for (const auto& s : surfaces) freq.emplace_back(s, 1);
  return build_label_system(freq, surfaces.size(), {}, {}, {});
}

// Random unit prompt embeddings for every (template, tag) pair.
EmbeddingTable random_prompts(std::mt19937_64& gen, const TagVocabulary& vocab,
                              const std::vector<std::string>& templates, std::size_t dim) {
  EmbeddingTable t(dim, true);
  for (std::size_t id = 0; id < vocab.group_count(); ++id) {
    for (const auto& name : templates) {
      t.add(prompt_key(name, vocab.canonical(static_cast<TagId>(id))), random_unit(gen, dim));
    }
  }
  return t;
}

TEST(PromptTemplates, ReadAndRender) {
  const auto t = read_templates("# comment\nphoto\ta photo of a {tag}\nplain\t{tag}\n");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].render("dog"), "a photo of a dog");
  EXPECT_EQ(t[1].render("traffic light"), "traffic light");
  EXPECT_EQ(prompt_key("photo", "dog"), "photo::dog");
  EXPECT_THROW(read_templates(""), ValidationError);
  EXPECT_THROW(read_templates("a::b\tx {tag}\n"), ValidationError);
  EXPECT_THROW(read_templates("just one column\n"), ValidationError);
}

TEST(BuildLabelQueries, SingleTemplateIsIdentity) {
  std::mt19937_64 gen(1);
  const auto vocab = vocab_of({"cat", "dog"});
  const auto prompts = random_prompts(gen, vocab, {"photo"}, 6);
  const auto q = build_label_queries(vocab, prompts, {"photo"});
  ASSERT_EQ(q.size(), 2u);
  EXPECT_EQ(q.vocab_version, vocab.version());
  for (std::size_t r = 0; r < q.size(); ++r) {
    const auto expect = prompts.at(prompt_key("photo", vocab.canonical(q.tag_ids[r])));
    for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(q.query(r)[d], expect[d], 1e-12);
  }
}

TEST(BuildLabelQueries, IdenticalPromptsAndOrthogonalPair) {
  const auto vocab = vocab_of({"cat", "dog"});
  EmbeddingTable prompts(3, true);
  prompts.add("a::cat", std::vector<double>{0, 1, 0});
  prompts.add("b::cat", std::vector<double>{0, 1, 0});
  prompts.add("a::dog", std::vector<double>{1, 0, 0});
  prompts.add("b::dog", std::vector<double>{0, 0, 1});
  const auto q = build_label_queries(vocab, prompts, {"a", "b"});
  const auto cat = q.query(*q.row_of(*vocab.find("cat")));
  EXPECT_NEAR(cat[1], 1.0, 1e-15);
  const auto dog = q.query(*q.row_of(*vocab.find("dog")));
  EXPECT_NEAR(l2_norm(dog), 1.0, 1e-15);
  EXPECT_NEAR(dot(dog, prompts.at("a::dog")), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(dot(dog, prompts.at("b::dog")), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(BuildLabelQueries, ReportsEveryMissingKey) {
  const auto vocab = vocab_of({"cat", "dog"});
  EmbeddingTable prompts(2, true);
  prompts.add("a::cat", std::vector<double>{1, 0});
  try {
    build_label_queries(vocab, prompts, {"a", "b"});
    FAIL();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("3 missing"), std::string::npos) << what;
    EXPECT_NE(what.find("b::cat"), std::string::npos);
    EXPECT_NE(what.find("a::dog"), std::string::npos);
    EXPECT_NE(what.find("b::dog"), std::string::npos);
  }
}

TEST(BuildLabelQueries, OppositePromptsNameTheTag) {
  const auto vocab = vocab_of({"cat"});
  EmbeddingTable prompts(2, true);
  prompts.add("a::cat", std::vector<double>{1, 0});
  prompts.add("b::cat", std::vector<double>{-1, 0});
  try {
    build_label_queries(vocab, prompts, {"a", "b"});
    FAIL();
  } catch (const EmbeddingError& e) {
    EXPECT_EQ(e.kind(), EmbeddingError::Kind::kZeroVector);
    EXPECT_EQ(e.key(), "cat");
  }
}

// The bound holds whenever a tag's prompts have pairwise non-negative cosines,
// the regime of paraphrased prompts; prompts are drawn around a shared direction.
TEST(BuildLabelQueries, EnsembleBounds) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  const std::vector<std::string> templates = {"a", "b", "c", "d"};
  const auto vocab = vocab_of({"x", "y", "z"});
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 2 + trial % 10;
    EmbeddingTable raw(dim);
    for (std::size_t id = 0; id < vocab.group_count(); ++id) {
      const auto base = random_unit(gen, dim);
      for (const auto& name : templates) {
        std::vector<double> v(base);
        for (double& x : v) x += 0.4 * nd(gen);
        raw.add(prompt_key(name, vocab.canonical(static_cast<TagId>(id))), v);
      }
    }
    const auto prompts = normalize(raw);
    const auto q = build_label_queries(vocab, prompts, templates);
    for (std::size_t r = 0; r < q.size(); ++r) {
      const std::string& c = vocab.canonical(q.tag_ids[r]);
      EXPECT_NEAR(l2_norm(q.query(r)), 1.0, LabelQueryMatrix::kUnitTolerance);
      double min_pair = 1.0;
      for (const auto& a : templates) {
        for (const auto& b : templates) {
          if (a < b) min_pair = std::min(min_pair, dot(prompts.at(prompt_key(a, c)), prompts.at(prompt_key(b, c))));
        }
      }
      if (min_pair < 0.0) continue;
      ++checked;
      for (const auto& a : templates) {
        EXPECT_GE(dot(q.query(r), prompts.at(prompt_key(a, c))), min_pair - 1e-12);
      }
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(LabelQueryMatrix, SaveLoadRoundTrip) {
  std::mt19937_64 gen(3);
  const auto vocab = vocab_of({"cat", "dog", "tree"});
  const auto q = build_label_queries(vocab, random_prompts(gen, vocab, {"a", "b"}, 5), {"a", "b"});
  const std::string path = (testing::scratch_dir("queries") / "q.emb").string();
  q.save(path);
  const auto back = LabelQueryMatrix::load(path);
  EXPECT_EQ(back.vocab_version, q.vocab_version);
  EXPECT_EQ(back.templates, q.templates);
  EXPECT_EQ(back.tag_ids, q.tag_ids);
  for (std::size_t r = 0; r < q.size(); ++r) {
    for (std::size_t d = 0; d < 5; ++d) EXPECT_NEAR(back.query(r)[d], q.query(r)[d], 1e-7);
  }
}

TEST(Score, Examples) {
  const auto vocab = vocab_of({"cat", "dog"});
  EmbeddingTable prompts(2, true);
  prompts.add("a::cat", std::vector<double>{1, 0});
  prompts.add("a::dog", std::vector<double>{0, 1});
  const auto q = build_label_queries(vocab, prompts, {"a"});
  const auto s = score(std::vector<double>{1, 0}, q);
  EXPECT_DOUBLE_EQ(s[0], 1.0);
  EXPECT_DOUBLE_EQ(s[1], 0.0);
  EXPECT_THROW(score(std::vector<double>{1, 0, 0}, q), EmbeddingError);
  EXPECT_THROW(score(std::vector<double>{2, 0}, q), EmbeddingError);
}

TEST(Score, MatchesDirectDotProducts) {
  std::mt19937_64 gen(4);
  const auto vocab = vocab_of({"a", "b", "c", "d", "e"});
  const auto q = build_label_queries(vocab, random_prompts(gen, vocab, {"t1", "t2"}, 8), {"t1", "t2"});
  for (int trial = 0; trial < 100; ++trial) {
    const auto e = random_unit(gen, 8);
    const auto s = score(e, q);
    for (std::size_t r = 0; r < q.size(); ++r) {
      double expect = 0.0;
      for (std::size_t d = 0; d < 8; ++d) expect += e[d] * q.query(r)[d];
      EXPECT_NEAR(s[r], expect, 1e-12);
      EXPECT_LE(std::abs(s[r]), 1.0 + 1e-12);
    }
  }
}

TEST(Score, RawScoresAreLinear) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ud(-3, 3);
  const auto vocab = vocab_of({"a", "b", "c"});
  const auto q = build_label_queries(vocab, random_prompts(gen, vocab, {"t"}, 6), {"t"});
  for (int trial = 0; trial < 100; ++trial) {
    const auto u = random_unit(gen, 6);
    const auto v = random_unit(gen, 6);
    const double alpha = ud(gen), beta = ud(gen);
    std::vector<double> mix(6);
    for (std::size_t d = 0; d < 6; ++d) mix[d] = alpha * u[d] + beta * v[d];
    const auto sm = raw_scores(mix, q);
    const auto su = raw_scores(u, q);
    const auto sv = raw_scores(v, q);
    for (std::size_t r = 0; r < q.size(); ++r) EXPECT_NEAR(sm[r], alpha * su[r] + beta * sv[r], 1e-12);
  }
}

TEST(Score, PositiveScalingKeepsRankingAndTags) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  const auto vocab = vocab_of({"a", "b", "c", "d", "e", "f"});
  const auto q = build_label_queries(vocab, random_prompts(gen, vocab, {"t"}, 4), {"t"});
  ThresholdProfile profile;
  profile.default_threshold = 0.1;
  for (int trial = 0; trial < 100; ++trial) {
    const auto e = random_unit(gen, 4);
    const double s = scale(gen);
    EmbeddingTable raw(4);
    std::vector<double> scaled(e);
    for (double& x : scaled) x *= s;
    raw.add("x", scaled);
    const auto renorm = normalize(raw);
    const auto a = score(e, q);
    const auto b = score(renorm.at("x"), q);
    std::vector<std::size_t> ra(a.size()), rb(b.size());
    std::iota(ra.begin(), ra.end(), 0);
    std::iota(rb.begin(), rb.end(), 0);
    std::stable_sort(ra.begin(), ra.end(), [&](auto i, auto j) { return a[i] > a[j]; });
    std::stable_sort(rb.begin(), rb.end(), [&](auto i, auto j) { return b[i] > b[j]; });
    EXPECT_EQ(ra.front(), rb.front());
    EXPECT_EQ(tag_image(e, q, profile), tag_image(renorm.at("x"), q, profile));
  }
}

TEST(TagImage, Thresholds) {
  const auto vocab = vocab_of({"a", "b"});
  EmbeddingTable prompts(2, true);
  prompts.add("t::a", std::vector<double>{1, 0});
  prompts.add("t::b", std::vector<double>{0, 1});
  const auto q = build_label_queries(vocab, prompts, {"t"});
  const std::vector<double> e = {std::sqrt(1.0 - 0.01), 0.1};  // scores a ~0.995, b 0.1
  ThresholdProfile p;
  p.default_threshold = 1.01;
  EXPECT_TRUE(tag_image(e, q, p).empty());
  p.default_threshold = -1.0;
  EXPECT_EQ(tag_image(e, q, p), (std::vector<TagId>{0, 1}));
  p.default_threshold = 0.3;
  EXPECT_EQ(tag_image(e, q, p), (std::vector<TagId>{0}));
  p.overrides[1] = 0.05;
  EXPECT_EQ(tag_image(e, q, p), (std::vector<TagId>{0, 1}));

  const std::vector<double> scores = {0.5, 0.1};
  ThresholdProfile plain;
  plain.default_threshold = 0.3;
  EXPECT_EQ(tag_from_scores(scores, q, plain), (std::vector<TagId>{0}));
}

TEST(ThresholdProfile, TsvRoundTripAndValidation) {
  ThresholdProfile p;
  p.default_threshold = 0.25;
  p.overrides = {{0, 0.5}, {3, -0.125}};
  const auto back = ThresholdProfile::from_tsv(p.to_tsv());
  EXPECT_EQ(back.default_threshold, 0.25);
  EXPECT_EQ(back.overrides, p.overrides);
  EXPECT_EQ(p.to_tsv(), "*\t0.25\n0\t0.5\n3\t-0.125\n");
  EXPECT_THROW(ThresholdProfile::from_tsv("1\t0.2\n1\t0.3\n"), ValidationError);
  EXPECT_THROW(ThresholdProfile::from_tsv("x\t0.2\n"), ValidationError);
  EXPECT_THROW(ThresholdProfile::from_tsv("1\tnan\n"), ValidationError);

  const auto vocab = vocab_of({"a"});
  EmbeddingTable prompts(1, true);
  prompts.add("t::a", std::vector<double>{1});
  const auto q = build_label_queries(vocab, prompts, {"t"});
  EXPECT_NO_THROW(ThresholdProfile{}.validate(q));
  EXPECT_THROW(p.validate(q), ValidationError);
}

TEST(Calibrate, Examples) {
  CalibrationData sep;
  sep.classes = {0};
  sep.scores = {{0.9, 0.9, 0.1, 0.1}};
  sep.labels = {{1, 1, 0, 0}};
  const auto p = calibrate_thresholds(sep, {0.5});
  EXPECT_EQ(p.effective(0), 0.5);
  EXPECT_EQ(confusion_at(sep.scores[0], sep.labels[0], 0.5).f1(), 1.0);

  CalibrationData allpos;
  allpos.classes = {0, 1};
  allpos.scores = {{0.9, 0.8}, {0.7, 0.2}};
  allpos.labels = {{1, 1}, {1, 0}};
  const auto q = calibrate_thresholds(allpos, {0.1, 0.5, 0.75});
  EXPECT_EQ(q.overrides.count(0), 0u);
  EXPECT_EQ(q.effective(1), 0.5);

  EXPECT_THROW(calibrate_thresholds(sep, {}), ValidationError);
}

TEST(Calibrate, MatchesExhaustiveSearch) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    CalibrationData data;
    const std::size_t n = 5 + gen() % 60;
    for (TagId c = 0; c < 5; ++c) {
      data.classes.push_back(c);
      std::vector<double> s(n);
      std::vector<std::uint8_t> l(n);
      for (std::size_t i = 0; i < n; ++i) {
        l[i] = ud(gen) < 0.3 ? 1 : 0;
        // coarse scores so that F1 ties happen
        s[i] = std::round(10.0 * ((l[i] ? 0.2 : 0.0) + 0.8 * ud(gen))) / 10.0;
      }
      data.scores.push_back(s);
      data.labels.push_back(l);
    }
    std::vector<double> grid;
    for (int g = 0; g <= 10; ++g) grid.push_back(g / 10.0);
    std::shuffle(grid.begin(), grid.end(), gen);
    const auto profile = calibrate_thresholds(data, grid);

    std::vector<double> desc;
    for (int g = 10; g >= 0; --g) desc.push_back(g / 10.0);
    for (std::size_t c = 0; c < 5; ++c) {
      const std::vector<int> labels(data.labels[c].begin(), data.labels[c].end());
      const int pos = std::accumulate(labels.begin(), labels.end(), 0);
      if (pos == 0 || pos == static_cast<int>(n)) {
        EXPECT_EQ(profile.overrides.count(static_cast<TagId>(c)), 0u);
        continue;
      }
      EXPECT_EQ(profile.effective(static_cast<TagId>(c)), oracle::best_threshold(desc, data.scores[c], labels))
          << "trial " << trial << " class " << c;
    }
    // default: micro F1 over the pooled decisions
    std::vector<double> pooled_s;
    std::vector<int> pooled_l;
    for (std::size_t c = 0; c < 5; ++c) {
      pooled_s.insert(pooled_s.end(), data.scores[c].begin(), data.scores[c].end());
      pooled_l.insert(pooled_l.end(), data.labels[c].begin(), data.labels[c].end());
    }
    EXPECT_EQ(profile.default_threshold, oracle::best_threshold(desc, pooled_s, pooled_l));
  }
}

}  // namespace
}  // namespace tagforge
