// Copyright 2026 The ARO Probe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file embeddings.hpp
/// Embedding sets, the AROE file format, cosine similarity and exact k-NN.
///
/// AROE layout (all integers and floats little-endian):
///
///     offset  size  field
///     0       4     magic "AROE"
///     4       4     u32 version = 1
///     8       1     u8 kind (0 = image, 1 = text)
///     9       4     u32 dim
///     13      8     u64 count
///     21      4*count*dim  f32 vectors, row-major
///
/// Ids live in a sidecar `<path>.ids.jsonl`, one {"index", "id", "kind"}
/// object per row in row order.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "aro/error.hpp"

namespace aro::emb {

enum class Kind : std::uint8_t { Image = 0, Text = 1 };

inline std::string_view to_string(Kind k) { return k == Kind::Image ? "image" : "text"; }

inline Kind parse_kind(std::string_view s) {
  if (s == "image") return Kind::Image;
  if (s == "text") return Kind::Text;
  throw DataError("unknown embedding kind '" + std::string(s) + "'");
}

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kMagic[4] = {'A', 'R', 'O', 'E'};
inline constexpr std::size_t kHeaderBytes = 21;

/// Ordered, id-indexed rows of equal dimension. Storage is float; all
/// arithmetic on rows accumulates in double.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(Kind kind, std::size_t dim) : kind_(kind), dim_(dim) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<float>& data() const noexcept { return data_; }

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view id) const { return find(id).has_value(); }

  template <typename T>
  void add(std::string id, std::span<const T> values) {
    if (values.size() != dim_)
      throw DataError("row '" + id + "' has dim " + std::to_string(values.size()) +
                      ", expected " + std::to_string(dim_));
    if (!index_.emplace(id, ids_.size()).second)
      throw DataError("duplicate embedding id '" + id + "'");
    ids_.push_back(std::move(id));
    for (auto v : values) data_.push_back(static_cast<float>(v));
  }

  void add(std::string id, std::initializer_list<float> values) {
    add(std::move(id), std::span<const float>(values.begin(), values.size()));
  }

  /// Rescales every row to unit L2 norm; zero rows are a NumericError.
  void normalize() {
    for (std::size_t i = 0; i < size(); ++i) {
      double ss = 0.0;
      for (float v : row(i)) ss += static_cast<double>(v) * v;
      if (!(ss > 0.0) || !std::isfinite(ss))
        throw NumericError("cannot normalize row '" + ids_[i] + "' (norm " +
                           std::to_string(std::sqrt(ss)) + ")");
      const double inv = 1.0 / std::sqrt(ss);
      float* r = data_.data() + i * dim_;
      for (std::size_t k = 0; k < dim_; ++k) r[k] = static_cast<float>(r[k] * inv);
    }
  }

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    return a.kind_ == b.kind_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ &&
           a.data_.size() == b.data_.size() &&
           std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
  }

 private:
  Kind kind_ = Kind::Text;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

inline double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

// ---------------------------------------------------------------------------
// File format

inline std::string manifest_path(const std::string& path) { return path + ".ids.jsonl"; }

namespace detail {

template <typename T>
void put_le(std::string& buf, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  return static_cast<T>(u);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace detail

/// Serialized AROE bytes (without the manifest).
inline std::string encode(const EmbeddingSet& set) {
  std::string buf;
  buf.reserve(kHeaderBytes + set.data().size() * 4);
  buf.append(kMagic, 4);
  detail::put_le<std::uint32_t>(buf, kFormatVersion);
  buf.push_back(static_cast<char>(set.kind()));
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(set.dim()));
  detail::put_le<std::uint64_t>(buf, set.size());
  for (float v : set.data()) detail::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(v));
  return buf;
}

inline void save(const EmbeddingSet& set, const std::string& path) {
  const auto bytes = encode(set);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path);
  }
  std::ofstream man(manifest_path(path), std::ios::trunc);
  if (!man) throw DataError("cannot write " + manifest_path(path));
  for (std::size_t i = 0; i < set.size(); ++i) {
    nlohmann::ordered_json j;
    j["index"] = i;
    j["id"] = set.ids()[i];
    j["kind"] = to_string(set.kind());
    man << j.dump() << '\n';
  }
  if (!man) throw DataError("write failed for " + manifest_path(path));
}

/// Parses AROE bytes with ids supplied separately.
inline EmbeddingSet decode(std::string_view bytes, const std::vector<std::string>& ids) {
  if (bytes.size() < kHeaderBytes) throw DataError("AROE: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("AROE: bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = detail::get_le<std::uint32_t>(p + 4);
  if (version != kFormatVersion)
    throw DataError("AROE: unsupported version " + std::to_string(version));
  const std::uint8_t kind_byte = p[8];
  if (kind_byte > 1) throw DataError("AROE: bad kind byte " + std::to_string(kind_byte));
  const auto dim = detail::get_le<std::uint32_t>(p + 9);
  const auto count = detail::get_le<std::uint64_t>(p + 13);
  if (dim == 0) throw DataError("AROE: zero dimension");
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (count > payload / 4 / dim || payload != count * dim * 4)
    throw DataError("AROE: payload holds " + std::to_string(payload) + " bytes, header promises " +
                    std::to_string(count) + "x" + std::to_string(dim) + " floats");
  if (ids.size() != count)
    throw DataError("AROE: manifest lists " + std::to_string(ids.size()) + " ids for " +
                    std::to_string(count) + " rows");
  EmbeddingSet set(static_cast<Kind>(kind_byte), dim);
  std::vector<float> row(dim);
  const unsigned char* q = p + kHeaderBytes;
  for (std::uint64_t i = 0; i < count; ++i) {
    for (std::uint32_t k = 0; k < dim; ++k, q += 4)
      row[k] = std::bit_cast<float>(detail::get_le<std::uint32_t>(q));
    set.add(ids[i], std::span<const float>(row));
  }
  return set;
}

inline EmbeddingSet load(const std::string& path) {
  const auto bytes = detail::read_file(path);
  std::ifstream man(manifest_path(path));
  if (!man) throw DataError("missing manifest " + manifest_path(path));
  std::vector<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  std::optional<Kind> manifest_kind;
  while (std::getline(man, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("index").get<std::size_t>() != ids.size())
        throw ParseError("manifest index out of order", lineno);
      const auto k = parse_kind(j.at("kind").get<std::string>());
      if (manifest_kind && *manifest_kind != k) throw ParseError("mixed kinds in manifest", lineno);
      manifest_kind = k;
      ids.push_back(j.at("id").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest: ") + e.what(), lineno);
    }
  }
  auto set = decode(bytes, ids);
  if (manifest_kind && *manifest_kind != set.kind())
    throw DataError("AROE: manifest kind disagrees with header");
  return set;
}

// ---------------------------------------------------------------------------
// Similarity

struct SimilarityMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  std::vector<double> values;  // row-major

  std::size_t rows() const noexcept { return row_ids.size(); }
  std::size_t cols() const noexcept { return col_ids.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
};

namespace detail {

inline std::vector<double> row_norms(const EmbeddingSet& s) {
  std::vector<double> n(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    n[i] = norm(s.row(i));
    if (!(n[i] > 0.0) || !std::isfinite(n[i]))
      throw NumericError("zero-norm or non-finite row '" + s.ids()[i] + "'");
  }
  return n;
}

// Runs fn(row) for row in [0, n) over `jobs` threads with disjoint rows.
template <typename Fn>
void parallel_rows(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += jobs) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// values[j][k] = <a_j, b_k> / (|a_j| |b_k|).
inline SimilarityMatrix cosine_matrix(const EmbeddingSet& a, const EmbeddingSet& b,
                                      std::size_t jobs = 1) {
  if (a.dim() != b.dim())
    throw DataError("embedding dims differ: " + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()));
  const auto na = detail::row_norms(a);
  const auto nb = detail::row_norms(b);
  SimilarityMatrix s{a.ids(), b.ids(), std::vector<double>(a.size() * b.size())};
  detail::parallel_rows(a.size(), jobs, [&](std::size_t j) {
    for (std::size_t k = 0; k < b.size(); ++k)
      s.at(j, k) = dot(a.row(j), b.row(k)) / (na[j] * nb[k]);
  });
  return s;
}

struct Neighbor {
  std::size_t index = 0;
  double similarity = 0.0;
};

struct NeighborTable {
  std::vector<std::string> ids;
  std::vector<std::vector<Neighbor>> lists;
};

/// Exact top-k by cosine, self excluded, ties broken by ascending id.
inline NeighborTable top_k_neighbors(const EmbeddingSet& set, std::size_t k,
                                     std::size_t jobs = 1) {
  if (k < 1) throw UsageError("top_k_neighbors: k must be at least 1");
  const std::size_t n = set.size();
  if (n < 2) throw DataError("top_k_neighbors: need at least two rows");
  const std::size_t take = std::min(k, n - 1);
  const auto norms = detail::row_norms(set);
  const auto& ids = set.ids();
  NeighborTable table{ids, std::vector<std::vector<Neighbor>>(n)};
  detail::parallel_rows(n, jobs, [&](std::size_t i) {
    std::vector<Neighbor> all;
    all.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) all.push_back({j, dot(set.row(i), set.row(j)) / (norms[i] * norms[j])});
    auto better = [&](const Neighbor& x, const Neighbor& y) {
      if (x.similarity != y.similarity) return x.similarity > y.similarity;
      return ids[x.index] < ids[y.index];
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                      better);
    all.resize(take);
    table.lists[i] = std::move(all);
  });
  return table;
}

}  // namespace aro::emb
