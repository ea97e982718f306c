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

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tagforge/embedding_store.hpp"
#include "test_util.hpp"

namespace tagforge {
namespace {

using Kind = EmbeddingError::Kind;

Kind kind_of(std::string_view bytes) {
  try {
    EmbeddingTable::from_bytes(bytes);
  } catch (const EmbeddingError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return Kind::kMissingKey;
}

std::string header(std::uint32_t count, std::uint32_t dim, std::uint8_t flag) {
  std::string out = "EMB1";
  detail::append_le<std::uint32_t>(out, count);
  detail::append_le<std::uint32_t>(out, dim);
  detail::append_le<std::uint8_t>(out, flag);
  return out;
}

void append_record(std::string& out, const std::string& key, const std::vector<float>& v) {
  detail::append_le<std::uint16_t>(out, static_cast<std::uint16_t>(key.size()));
  out += key;
  for (float f : v) detail::append_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
}

TEST(EmbeddingTable, EmptyFileLoads) {
  const auto t = EmbeddingTable::from_bytes(header(0, 4, 1));
  EXPECT_TRUE(t.empty());
  EXPECT_EQ(t.dim(), 4u);
  EXPECT_TRUE(t.normalized());
  EXPECT_EQ(t.to_bytes(), header(0, 4, 1));
}

TEST(EmbeddingTable, ByteLayout) {
  EmbeddingTable t(2, false);
  const std::vector<double> v = {1.0, -2.0};
  t.add("ab", v);
  std::string expect = header(1, 2, 0);
  append_record(expect, "ab", {1.0f, -2.0f});
  EXPECT_EQ(t.to_bytes(), expect);
  EXPECT_EQ(expect.size(), 13u + 2 + 2 + 8);
}

TEST(EmbeddingTable, RejectsBadInput) {
  EXPECT_EQ(kind_of("EMB2" + header(0, 4, 1).substr(4)), Kind::kBadMagic);
  EXPECT_EQ(kind_of("EM"), Kind::kTruncated);
  EXPECT_EQ(kind_of(header(0, 4, 1).substr(0, 10)), Kind::kTruncated);

  std::string two = header(2, 2, 0);
  append_record(two, "a", {1, 2});
  append_record(two, "a", {3, 4});
  EXPECT_EQ(kind_of(two), Kind::kDuplicateKey);

  std::string nan = header(1, 2, 0);
  append_record(nan, "a", {1, std::numeric_limits<float>::quiet_NaN()});
  EXPECT_EQ(kind_of(nan), Kind::kNonFinite);

  std::string inf = header(1, 2, 0);
  append_record(inf, "a", {std::numeric_limits<float>::infinity(), 0});
  EXPECT_EQ(kind_of(inf), Kind::kNonFinite);

  std::string trailing = header(1, 2, 0);
  append_record(trailing, "a", {1, 2});
  trailing += "xyz";
  EXPECT_EQ(kind_of(trailing), Kind::kDimensionMismatch);

  std::string short_vec = header(1, 3, 0);
  append_record(short_vec, "a", {1, 2});
  EXPECT_EQ(kind_of(short_vec), Kind::kTruncated);

  std::string not_unit = header(1, 2, 1);
  append_record(not_unit, "a", {1, 1});
  EXPECT_EQ(kind_of(not_unit), Kind::kNotNormalized);

  EXPECT_EQ(kind_of(header(0, 0, 0)), Kind::kDimensionMismatch);
}

TEST(EmbeddingTable, ErrorCarriesOffsetAndKey) {
  std::string two = header(2, 1, 0);
  append_record(two, "first", {1});
  const std::size_t second = two.size();
  append_record(two, "first", {2});
  try {
    EmbeddingTable::from_bytes(two);
    FAIL();
  } catch (const EmbeddingError& e) {
    EXPECT_EQ(e.offset(), second);
    EXPECT_EQ(e.key(), "first");
  }
}

TEST(EmbeddingTable, AddChecksDimensionAndMissingKey) {
  EmbeddingTable t(3);
  const std::vector<double> two = {1, 2};
  EXPECT_THROW(t.add("a", two), EmbeddingError);
  EXPECT_FALSE(t.find("a"));
  try {
    t.at("nope");
    FAIL();
  } catch (const EmbeddingError& e) {
    EXPECT_EQ(e.kind(), Kind::kMissingKey);
    EXPECT_EQ(e.key(), "nope");
  }
}

TEST(EmbeddingTable, RandomUnitVectorsRoundTrip) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  EmbeddingTable raw(16, false);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(16);
    for (double& x : v) x = nd(gen);
    raw.add("k" + std::to_string(i), v);
  }
  const EmbeddingTable unit = normalize(raw);
  const auto dir = testing::scratch_dir("emb_round_trip");
  const std::string path = (dir / "unit.emb").string();
  unit.save(path);
  const EmbeddingTable back = EmbeddingTable::load(path);
  ASSERT_EQ(back.size(), 100u);
  EXPECT_TRUE(back.normalized());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back.key(i), unit.key(i));
    for (std::size_t d = 0; d < 16; ++d) {
      EXPECT_NEAR(back.row(i)[d], unit.row(i)[d], 1e-7);
    }
  }
  EXPECT_EQ(back.to_bytes(), detail::read_file(path));
}

TEST(Normalize, Examples) {
  EmbeddingTable t(2);
  t.add("v", std::vector<double>{3, 4});
  const auto n = normalize(t);
  EXPECT_DOUBLE_EQ(n.at("v")[0], 0.6);
  EXPECT_DOUBLE_EQ(n.at("v")[1], 0.8);
  EXPECT_TRUE(n.normalized());

  EmbeddingTable z(3);
  z.add("zero", std::vector<double>{0, 0, 0});
  try {
    normalize(z);
    FAIL();
  } catch (const EmbeddingError& e) {
    EXPECT_EQ(e.kind(), Kind::kZeroVector);
    EXPECT_EQ(e.key(), "zero");
  }
}

TEST(Normalize, IdempotentAndUnitNorm) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> ud(-10, 10);
  EmbeddingTable t(7);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> v(7);
    for (double& x : v) x = ud(gen);
    t.add(std::to_string(i), v);
  }
  const auto once = normalize(t);
  const auto twice = normalize(once);
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_NEAR(l2_norm(once.row(i)), 1.0, 1e-12);
    for (std::size_t d = 0; d < 7; ++d) EXPECT_NEAR(once.row(i)[d], twice.row(i)[d], 1e-15);
  }
}

}  // namespace
}  // namespace tagforge
