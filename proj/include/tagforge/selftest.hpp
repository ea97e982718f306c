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
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "tagforge/clustering.hpp"
#include "tagforge/common.hpp"
#include "tagforge/data_engine.hpp"
#include "tagforge/embedding_store.hpp"
#include "tagforge/label_system.hpp"
#include "tagforge/lexicon.hpp"
#include "tagforge/metrics.hpp"
#include "tagforge/rng.hpp"
#include "tagforge/similarity_tagger.hpp"

namespace tagforge::selftest {

struct Result {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  std::string detail;  // first failure
};

namespace detail {

class Check {
 public:
  explicit Check(Result& r) : r_(r) {}
  void expect(bool ok, const std::string& what) {
    if (!ok && r_.passed) {
      r_.passed = false;
      r_.detail = what;
    }
  }

 private:
  Result& r_;
};

inline std::vector<double> random_unit(Xoshiro256& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double sq = 0.0;
  for (double& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  for (double& x : v) x /= std::sqrt(sq);
  return v;
}

// AP from the ranking definition, quadratic.
inline double brute_ap(const std::vector<double>& s, const std::vector<std::uint8_t>& l) {
  auto rank = [&](std::size_t i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < s.size(); ++j) r += s[j] > s[i] || (s[j] == s[i] && j < i);
    return r;
  };
  double total = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    ++pos;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) hits += l[j] && rank(j) <= rank(i);
    total += static_cast<double>(hits) / static_cast<double>(rank(i));
  }
  return total / static_cast<double>(pos);
}

}  // namespace detail

inline Result average_precision_suite(std::uint64_t seed, std::size_t trials) {
  Result r{"average_precision matches definition", true, 0, {}};
  detail::Check check(r);
  Xoshiro256 rng(derive_seed(seed, 1));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 1 + rng.uniform_index(12);
    std::vector<double> s(n);
    std::vector<std::uint8_t> l(n);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_index(5)) / 4.0;
      l[i] = rng.uniform() < 0.4;
      any |= l[i] != 0;
    }
    const auto ap = average_precision(s, l);
    ++r.cases;
    if (!any) {
      check.expect(!ap, "zero positives produced an AP value");
      continue;
    }
    check.expect(ap && std::abs(*ap - detail::brute_ap(s, l)) <= 1e-12,
                 "AP differs from the definition on case " + std::to_string(t));
  }
  return r;
}

inline Result lloyd_suite(std::uint64_t seed, std::size_t trials) {
  Result r{"lloyd inertia non-increasing, nearest assignment", true, 0, {}};
  detail::Check check(r);
  Xoshiro256 rng(derive_seed(seed, 2));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.uniform_index(60);
    const std::size_t dim = 1 + rng.uniform_index(4);
    PointMatrix pts(dim);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& x : v) x = rng.normal();
      pts.push_back(v);
    }
    const std::size_t k = 1 + rng.uniform_index(std::min<std::size_t>(n, 5));
    ClusteringResult res;
    try {
      res = lloyd(pts, kmeanspp_init(pts, k, rng.next()));
    } catch (const std::exception& e) {
      check.expect(false, e.what());
      continue;
    }
    ++r.cases;
    for (std::size_t i = 1; i < res.inertia_history.size(); ++i) {
      check.expect(res.inertia_history[i] <= res.inertia_history[i - 1] * (1 + 1e-12),
                   "inertia rose on case " + std::to_string(t));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double own = squared_distance(pts.row(i), res.centroids.row(res.assignment[i]));
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(pts.row(i), res.centroids.row(c));
        check.expect(own < d || (own == d && res.assignment[i] <= c),
                     "point not at its nearest centroid on case " + std::to_string(t));
      }
    }
  }
  return r;
}

inline Result union_find_suite(std::uint64_t seed, std::size_t trials) {
  Result r{"synonym groups equal connected components", true, 0, {}};
  detail::Check check(r);
  Xoshiro256 rng(derive_seed(seed, 3));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 1 + rng.uniform_index(40);
    FrequencyTable freq;
    for (std::size_t i = 0; i < n; ++i) freq.emplace_back("s" + std::to_string(i), rng.uniform_index(9));
    std::vector<std::vector<std::size_t>> adj(n);
    std::vector<SynonymPair> pairs;
    for (std::size_t e = rng.uniform_index(n + 1); e > 0; --e) {
      const std::size_t a = rng.uniform_index(n), b = rng.uniform_index(n);
      adj[a].push_back(b);
      adj[b].push_back(a);
      pairs.emplace_back(freq[a].first, freq[b].first);
    }
    // components by depth-first search
    std::vector<std::size_t> comp(n, n);
    std::size_t comps = 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (comp[s] != n) continue;
      std::vector<std::size_t> stack = {s};
      comp[s] = comps;
      while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t w : adj[u]) {
          if (comp[w] == n) {
            comp[w] = comps;
            stack.push_back(w);
          }
        }
      }
      ++comps;
    }
    const auto vocab = build_label_system(freq, n, {}, pairs, {});
    ++r.cases;
    check.expect(vocab.group_count() == comps, "group count differs on case " + std::to_string(t));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        check.expect((vocab.find(freq[a].first) == vocab.find(freq[b].first)) == (comp[a] == comp[b]),
                     "grouping differs on case " + std::to_string(t));
      }
    }
    check.expect(TagVocabulary::from_tsv(vocab.to_tsv()).to_tsv() == vocab.to_tsv(),
                 "vocabulary TSV does not round-trip");
  }
  return r;
}

inline Result embedding_suite(std::uint64_t seed, std::size_t trials) {
  Result r{"EMB1 round trip and normalization", true, 0, {}};
  detail::Check check(r);
  Xoshiro256 rng(derive_seed(seed, 4));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t dim = 1 + rng.uniform_index(16);
    EmbeddingTable raw(dim);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < 1 + rng.uniform_index(10); ++i) {
      for (double& x : v) x = rng.normal() + 0.1;
      raw.add("k" + std::to_string(i), v);
    }
    const auto unit = normalize(raw);
    const std::string bytes = unit.to_bytes();
    const auto back = EmbeddingTable::from_bytes(bytes);
    ++r.cases;
    check.expect(back.to_bytes() == bytes, "bytes differ after reload");
    for (std::size_t i = 0; i < back.size(); ++i) {
      check.expect(std::abs(l2_norm(back.row(i)) - 1.0) <= EmbeddingTable::kNormTolerance,
                   "reloaded vector is not unit-norm");
    }
  }
  return r;
}

inline Result ensemble_suite(std::uint64_t seed, std::size_t trials) {
  Result r{"prompt ensemble unit-norm, argmax scale invariant", true, 0, {}};
  detail::Check check(r);
  Xoshiro256 rng(derive_seed(seed, 5));
  FrequencyTable freq = {{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}};
  const auto vocab = build_label_system(freq, 4, {}, {}, {});
  const std::vector<std::string> templates = {"t0", "t1", "t2"};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t dim = 2 + rng.uniform_index(8);
    EmbeddingTable prompts(dim, true);
    for (std::size_t id = 0; id < vocab.group_count(); ++id) {
      for (const auto& name : templates) {
        prompts.add(prompt_key(name, vocab.canonical(static_cast<TagId>(id))), detail::random_unit(rng, dim));
      }
    }
    LabelQueryMatrix q;
    try {
      q = build_label_queries(vocab, prompts, templates);
    } catch (const EmbeddingError&) {
      continue;  // a degenerate draw averaging to zero
    }
    ++r.cases;
    for (std::size_t row = 0; row < q.size(); ++row) {
      check.expect(std::abs(l2_norm(q.query(row)) - 1.0) <= LabelQueryMatrix::kUnitTolerance,
                   "query is not unit-norm");
    }
    const auto e = detail::random_unit(rng, dim);
    std::vector<double> scaled(e);
    const double s = 0.01 + 100.0 * rng.uniform();
    for (double& x : scaled) x *= s;
    const auto a = score(e, q);
    const auto b = raw_scores(scaled, q);
    check.expect(std::max_element(a.begin(), a.end()) - a.begin() ==
                     std::max_element(b.begin(), b.end()) - b.begin(),
                 "argmax changed under positive scaling");
  }
  return r;
}

inline Result cleaning_suite(std::uint64_t seed, std::size_t trials) {
  Result r{"outlier quota exact, removals need every region", true, 0, {}};
  detail::Check check(r);
  Xoshiro256 rng(derive_seed(seed, 6));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 20 + rng.uniform_index(200);
    const std::size_t dim = 4;
    EmbeddingTable emb(dim, true);
    std::vector<RegionRecord> regions;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string key = "r" + std::to_string(i);
      emb.add(key, detail::random_unit(rng, dim));
      regions.push_back({"img" + std::to_string(rng.uniform_index(n / 2 + 1)), key, 0, 0.5, key});
    }
    CleaningOptions opt;
    opt.fraction = 0.3 * rng.uniform();
    const auto res = clean_category(0, regions, emb, seed, opt);
    ++r.cases;
    check.expect(res.outliers.size() == outlier_quota(opt.fraction, n), "outlier count off quota");
    std::map<std::string, bool> all;
    std::set<std::size_t> out(res.outliers.begin(), res.outliers.end());
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, fresh] = all.emplace(regions[i].image_id, true);
      it->second = it->second && out.count(i);
    }
    std::vector<ImageTag> expect;
    for (const auto& [img, every] : all) {
      if (every) expect.emplace_back(img, 0);
    }
    check.expect(expect == res.removals, "removal set disagrees with region outliers");
  }
  return r;
}

inline Result micro_recall_suite(std::uint64_t seed, std::size_t trials) {
  Result r{"micro recall non-increasing in threshold", true, 0, {}};
  detail::Check check(r);
  Xoshiro256 rng(derive_seed(seed, 7));
  for (std::size_t t = 0; t < trials; ++t) {
    EvalInstance inst;
    const std::size_t images = 1 + rng.uniform_index(20), classes = 1 + rng.uniform_index(5);
    for (std::size_t c = 0; c < classes; ++c) inst.classes.push_back(static_cast<TagId>(c));
    for (std::size_t i = 0; i < images; ++i) {
      inst.image_ids.push_back(std::to_string(i));
      for (std::size_t c = 0; c < classes; ++c) {
        inst.scores.push_back(rng.uniform());
        inst.labels.push_back(rng.uniform() < 0.4 ? Label::kPositive : Label::kNegative);
      }
    }
    ++r.cases;
    double prev = 2.0;
    for (int g = 0; g <= 10; ++g) {
      ThresholdProfile p;
      p.default_threshold = g / 10.0;
      const double rec = precision_recall(inst, p).micro_recall;
      check.expect(rec <= prev, "micro recall rose with the threshold");
      prev = rec;
    }
  }
  return r;
}

inline Result lexicon_suite(const LexiconBundle& lex) {
  Result r{"lemmatizer idempotent over the lexicon", true, 0, {}};
  detail::Check check(r);
  for (const auto& [word, pos] : lex.pos_entries()) {
    ++r.cases;
    const std::string once = lemmatize(word, lex);
    check.expect(lemmatize(once, lex) == once, "lemmatize is not idempotent on '" + word + "'");
  }
  return r;
}

// A null `lex` skips the lexicon suite.
inline std::vector<Result> run_all(std::uint64_t seed, std::size_t trials, const LexiconBundle* lex) {
  std::vector<Result> out;
  out.push_back(average_precision_suite(seed, trials * 10));
  out.push_back(lloyd_suite(seed, trials));
  out.push_back(union_find_suite(seed, trials));
  out.push_back(embedding_suite(seed, trials));
  out.push_back(ensemble_suite(seed, trials));
  out.push_back(cleaning_suite(seed, trials));
  out.push_back(micro_recall_suite(seed, trials));
  if (lex) out.push_back(lexicon_suite(*lex));
  return out;
}

}  // namespace tagforge::selftest
