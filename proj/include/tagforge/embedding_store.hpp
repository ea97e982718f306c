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

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tagforge/common.hpp"
#include "tagforge/lexicon.hpp"

namespace tagforge {

class EmbeddingError : public Error {
 public:
  enum class Kind {
    kBadMagic,
    kTruncated,
    kDimensionMismatch,
    kDuplicateKey,
    kNonFinite,
    kNotNormalized,
    kZeroVector,
    kMissingKey,
  };

  EmbeddingError(Kind kind, std::size_t offset, std::string key, const std::string& what)
      : Error(what + " (offset " + std::to_string(offset) +
              (key.empty() ? "" : ", key '" + key + "'") + ")"),
        kind_(kind),
        offset_(offset),
        key_(std::move(key)) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }
  const std::string& key() const noexcept { return key_; }

 private:
  Kind kind_;
  std::size_t offset_;
  std::string key_;
};

// Keyed fixed-dimension vectors. Stored as doubles in key insertion order;
// the on-disk form is 32-bit floats, which double holds exactly, so a loaded
// table saves back to identical bytes.
//
// EMB1 layout, all little-endian:
//   "EMB1" | u32 count | u32 dim | u8 normalized |
//   count x (u16 key_len | key bytes | dim x f32)
class EmbeddingTable {
 public:
  static constexpr double kNormTolerance = 1e-4;

  explicit EmbeddingTable(std::size_t dim = 1, bool normalized = false)
      : dim_(dim), normalized_(normalized) {
    if (dim == 0) {
      throw EmbeddingError(EmbeddingError::Kind::kDimensionMismatch, 0, "",
                           "dimension must be positive");
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  bool normalized() const { return normalized_; }

  const std::string& key(std::size_t i) const { return keys_[i]; }
  const std::vector<std::string>& keys() const { return keys_; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  std::optional<std::size_t> index_of(std::string_view key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view key) const { return index_.find(key) != index_.end(); }

  std::optional<std::span<const double>> find(std::string_view key) const {
    auto i = index_of(key);
    if (!i) return std::nullopt;
    return row(*i);
  }

  std::span<const double> at(std::string_view key) const {
    auto i = index_of(key);
    if (!i) {
      throw EmbeddingError(EmbeddingError::Kind::kMissingKey, 0, std::string(key),
                           "no embedding for key");
    }
    return row(*i);
  }

  // `offset` only labels errors (byte position when loading from a file).
  void add(std::string key, std::span<const double> values, std::size_t offset = 0) {
    if (values.size() != dim_) {
      throw EmbeddingError(EmbeddingError::Kind::kDimensionMismatch, offset, key,
                           "expected " + std::to_string(dim_) + " components, got " +
                               std::to_string(values.size()));
    }
    if (key.size() > 0xffff) {
      throw EmbeddingError(EmbeddingError::Kind::kTruncated, offset, key.substr(0, 32),
                           "key longer than 65535 bytes");
    }
    double sq = 0.0;
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw EmbeddingError(EmbeddingError::Kind::kNonFinite, offset, key, "non-finite component");
      }
      sq += v * v;
    }
    if (normalized_ && std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
      throw EmbeddingError(EmbeddingError::Kind::kNotNormalized, offset, key,
                           "vector norm " + detail::format_double(std::sqrt(sq)) +
                               " in a normalized table");
    }
    if (index_.find(key) != index_.end()) {
      throw EmbeddingError(EmbeddingError::Kind::kDuplicateKey, offset, key, "duplicate key");
    }
    index_.emplace(key, keys_.size());
    keys_.push_back(std::move(key));
    data_.insert(data_.end(), values.begin(), values.end());
  }

  static EmbeddingTable from_bytes(std::string_view bytes);

  static EmbeddingTable load(const std::string& path) {
    return from_bytes(detail::read_file(path));
  }

  std::string to_bytes() const;

  void save(const std::string& path) const { detail::write_file(path, to_bytes()); }

 private:
  std::size_t dim_;
  bool normalized_;
  std::vector<std::string> keys_;
  std::vector<double> data_;
  StringMap<std::size_t> index_;
};

namespace detail {

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const std::string& what, const std::string& key = "") const {
    if (remaining() < n) {
      throw EmbeddingError(EmbeddingError::Kind::kTruncated, pos_, key,
                           "truncated payload reading " + what);
    }
  }

  template <typename T>
  T read_le() {
    T v{};
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    std::make_unsigned_t<T> acc = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      acc |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
    }
    std::memcpy(&v, &acc, sizeof(T));
    return v;
  }

  float read_f32() { return std::bit_cast<float>(read_le<std::uint32_t>()); }

  std::string_view read_bytes(std::size_t n) {
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void append_le(std::string& out, T v) {
  auto u = static_cast<std::make_unsigned_t<T>>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
}

}  // namespace detail

inline EmbeddingTable EmbeddingTable::from_bytes(std::string_view bytes) {
  detail::ByteReader r(bytes);
  r.need(4, "magic");
  if (r.read_bytes(4) != "EMB1") {
    throw EmbeddingError(EmbeddingError::Kind::kBadMagic, 0, "", "bad magic, expected EMB1");
  }
  r.need(9, "header");
  const auto count = r.read_le<std::uint32_t>();
  const auto dim = r.read_le<std::uint32_t>();
  const auto flag = r.read_le<std::uint8_t>();
  if (dim == 0) {
    throw EmbeddingError(EmbeddingError::Kind::kDimensionMismatch, 8, "", "dimension is zero");
  }
  if (flag > 1) {
    throw EmbeddingError(EmbeddingError::Kind::kBadMagic, 12, "", "normalized flag not 0 or 1");
  }
  EmbeddingTable table(dim, flag == 1);
  std::vector<double> values(dim);
  for (std::uint32_t rec = 0; rec < count; ++rec) {
    const std::size_t record_offset = r.offset();
    r.need(2, "key length of record " + std::to_string(rec));
    const auto key_len = r.read_le<std::uint16_t>();
    r.need(key_len, "key of record " + std::to_string(rec));
    std::string key(r.read_bytes(key_len));
    r.need(std::size_t{dim} * 4, "vector of record " + std::to_string(rec), key);
    for (std::uint32_t d = 0; d < dim; ++d) values[d] = r.read_f32();
    table.add(std::move(key), values, record_offset);
  }
  if (r.remaining() != 0) {
    throw EmbeddingError(EmbeddingError::Kind::kDimensionMismatch, r.offset(), "",
                         std::to_string(r.remaining()) +
                             " trailing bytes; payload does not match count x dimension");
  }
  return table;
}

inline std::string EmbeddingTable::to_bytes() const {
  std::string out = "EMB1";
  out.reserve(13 + keys_.size() * (2 + dim_ * 4 + 16));
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(keys_.size()));
  detail::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  detail::append_le<std::uint8_t>(out, normalized_ ? 1 : 0);
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    detail::append_le<std::uint16_t>(out, static_cast<std::uint16_t>(keys_[i].size()));
    out += keys_[i];
    for (double v : row(i)) {
      detail::append_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

// Divides every vector by its L2 norm and sets the normalized flag.
inline EmbeddingTable normalize(const EmbeddingTable& table) {
  EmbeddingTable out(table.dim(), true);
  std::vector<double> buf(table.dim());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto v = table.row(i);
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) {
      throw EmbeddingError(EmbeddingError::Kind::kZeroVector, 0, table.key(i),
                           "cannot normalize a zero vector");
    }
    for (std::size_t d = 0; d < v.size(); ++d) buf[d] = v[d] / norm;
    out.add(table.key(i), buf);
  }
  return out;
}

inline double l2_norm(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace tagforge
