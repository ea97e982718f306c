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
#include <numeric>
#include <span>
#include <vector>

#include "tagforge/common.hpp"
#include "tagforge/parallel.hpp"
#include "tagforge/rng.hpp"

namespace tagforge {

// Row-major n x dim matrix of doubles.
class PointMatrix {
 public:
  PointMatrix() = default;
  explicit PointMatrix(std::size_t dim) : dim_(dim) {}
  PointMatrix(std::size_t rows, std::size_t dim) : dim_(dim), data_(rows * dim, 0.0) {}

  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  void push_back(std::span<const double> v) {
    if (v.size() != dim_) throw Error("point dimension mismatch");
    data_.insert(data_.end(), v.begin(), v.end());
  }

  friend bool operator==(const PointMatrix&, const PointMatrix&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

inline std::size_t distinct_rows(const PointMatrix& points) {
  std::vector<std::size_t> order(points.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    const auto ra = points.row(a);
    const auto rb = points.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

// D^2 seeding: the first centre is a uniformly chosen point, each further
// centre is a point drawn with probability proportional to its squared
// distance from the nearest centre chosen so far.
inline PointMatrix kmeanspp_init(const PointMatrix& points, std::size_t k, std::uint64_t seed) {
  const std::size_t n = points.rows();
  if (n == 0) throw ValidationError("kmeans", "no points to cluster");
  if (k == 0) throw ValidationError("kmeans", "k must be at least 1");
  if (k > distinct_rows(points)) {
    throw ValidationError("kmeans", "k = " + std::to_string(k) + " exceeds the " +
                                        std::to_string(distinct_rows(points)) + " distinct points");
  }
  Xoshiro256 rng(seed);
  PointMatrix centroids(points.dim());
  std::size_t chosen = rng.uniform_index(n);
  centroids.push_back(points.row(chosen));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), points.row(chosen));
  while (centroids.rows() < k) {
    double total = 0.0;
    for (double w : d2) total += w;
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    std::size_t last_positive = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      last_positive = i;
      acc += d2[i];
      if (acc > target) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_positive;  // rounding at the top of the range
    centroids.push_back(points.row(pick));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), points.row(pick)));
    }
  }
  return centroids;
}

struct ClusteringResult {
  PointMatrix centroids;
  std::vector<std::size_t> assignment;
  std::vector<double> distances;       // Euclidean, to the assigned centroid
  double inertia = 0.0;                // sum of squared distances
  std::size_t iterations = 0;          // update steps performed
  std::vector<double> inertia_history;  // initial assignment, then one per iteration
};

struct LloydOptions {
  std::size_t max_iter = 100;
  double tol = 1e-4;  // max centroid displacement (Euclidean)
  std::size_t workers = 1;
};

namespace detail {

// Nearest centroid per point, ties to the lowest index. Returns inertia.
inline double assign_points(const PointMatrix& points, const PointMatrix& centroids,
                            std::vector<std::size_t>& assignment, std::vector<double>& sq_dist,
                            std::size_t workers) {
  const std::size_t n = points.rows();
  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_c = 0;
      for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = squared_distance(points.row(i), centroids.row(c));
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      assignment[i] = best_c;
      sq_dist[i] = best;
    }
  });
  double inertia = 0.0;
  for (double d : sq_dist) inertia += d;  // point order: bit-stable across worker counts
  return inertia;
}

}  // namespace detail

// Lloyd iteration from the given centroids. An empty cluster takes over the
// point farthest from its centroid (among clusters with more than one
// point), so k stays fixed. Throws if inertia ever increases.
inline ClusteringResult lloyd(const PointMatrix& points, PointMatrix centroids,
                              const LloydOptions& options = {}) {
  const std::size_t n = points.rows();
  const std::size_t k = centroids.rows();
  if (k == 0) throw ValidationError("kmeans", "no initial centroids");
  if (centroids.dim() != points.dim()) {
    throw ValidationError("kmeans", "centroid dimension differs from point dimension");
  }
  if (n == 0) throw ValidationError("kmeans", "no points to cluster");
  const std::size_t dim = points.dim();

  ClusteringResult result;
  result.assignment.assign(n, 0);
  std::vector<double> sq(n, 0.0);
  double inertia = detail::assign_points(points, centroids, result.assignment, sq, options.workers);
  result.inertia_history.push_back(inertia);

  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = result.assignment[i];
      ++counts[c];
      const auto p = points.row(i);
      for (std::size_t d = 0; d < dim; ++d) sums[c * dim + d] += p[d];
    }
    PointMatrix next(k, dim);
    std::vector<bool> pinned(k, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[result.assignment[i]] < 2 || pinned[result.assignment[i]]) continue;
        if (far == n || sq[i] > sq[far]) far = i;
      }
      if (far == n) continue;  // cannot happen while k <= distinct points
      const std::size_t from = result.assignment[far];
      const auto p = points.row(far);
      for (std::size_t d = 0; d < dim; ++d) {
        sums[from * dim + d] -= p[d];
        sums[c * dim + d] = p[d];
      }
      --counts[from];
      counts[c] = 1;
      pinned[c] = true;
      result.assignment[far] = c;
      sq[far] = 0.0;
    }
    double displacement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      auto row = next.row(c);
      if (counts[c] == 0) {
        std::copy_n(centroids.row(c).begin(), dim, row.begin());
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d) {
        row[d] = sums[c * dim + d] / static_cast<double>(counts[c]);
      }
      displacement = std::max(displacement, std::sqrt(squared_distance(row, centroids.row(c))));
    }
    centroids = std::move(next);
    const double updated =
        detail::assign_points(points, centroids, result.assignment, sq, options.workers);
    ++result.iterations;
    // Allow for rounding when the partition no longer changes.
    if (updated > inertia * (1.0 + 1e-12) + 1e-300) {
      throw Error("lloyd: inertia increased from " + detail::format_double(inertia) + " to " +
                  detail::format_double(updated));
    }
    inertia = updated;
    result.inertia_history.push_back(inertia);
    if (displacement < options.tol) break;
  }

  result.centroids = std::move(centroids);
  result.inertia = inertia;
  result.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) result.distances[i] = std::sqrt(sq[i]);
  return result;
}

// Best of `restarts` seeded runs; restart r uses derive_seed(seed, r).
inline ClusteringResult kmeans(const PointMatrix& points, std::size_t k, std::uint64_t seed,
                               std::size_t restarts = 1, const LloydOptions& options = {}) {
  ClusteringResult best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    const std::uint64_t s = restarts <= 1 ? seed : derive_seed(seed, r);
    ClusteringResult run = lloyd(points, kmeanspp_init(points, k, s), options);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return best;
}

}  // namespace tagforge
