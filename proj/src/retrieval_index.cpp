// Copyright 2026 The motret Authors.
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

#include "motret/retrieval_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "motret/binary_io.hpp"
#include "motret/errors.hpp"

namespace motret {

namespace {

constexpr std::string_view kIndexMagic = "MIDX";
constexpr std::string_view kTableMagic = "EMBS";
constexpr double kUnitTolerance = 1e-6;

void write_rows(io::ByteWriter& w, std::string_view magic, int dim,
                const std::vector<std::string>& ids,
                std::span<const float> values) {
  w.magic(magic);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u32(static_cast<std::uint32_t>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w.short_string(ids[i]);
    w.f32s(values.subspan(i * dim, dim));
  }
}

void read_rows(io::ByteReader& r, std::string_view magic, int& dim,
               std::vector<std::string>& ids, std::vector<float>& values) {
  r.expect_magic(magic);
  dim = static_cast<int>(r.u32("dimension"));
  const std::uint32_t n = r.u32("entry count");
  // Every entry needs at least its id length and payload.
  if (std::uint64_t{n} * (2 + 4ull * dim) > r.remaining())
    throw FormatError("truncated input: header declares " + std::to_string(n) +
                      " entries");
  ids.reserve(n);
  values.resize(std::size_t{n} * dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    ids.push_back(r.short_string("entry id"));
    r.f32s(std::span(values).subspan(std::size_t{i} * dim, dim),
           "entry vector");
  }
  r.expect_end(magic);
}

}  // namespace

EmbeddingStore EmbeddingStore::build(
    std::vector<std::pair<std::string, RowVector>> entries, int dim) {
  EmbeddingStore store;
  store.dim_ = entries.empty() ? dim : static_cast<int>(entries[0].second.size());
  if (store.dim_ < 0) throw ShapeError("negative dimension");
  std::unordered_set<std::string> seen;
  store.ids_.reserve(entries.size());
  store.values_.reserve(entries.size() * store.dim_);
  for (auto& [id, v] : entries) {
    if (v.size() != store.dim_)
      throw ShapeError("vector for '" + id + "' has dimension " +
                       std::to_string(v.size()) + ", expected " +
                       std::to_string(store.dim_));
    if (!seen.insert(id).second)
      throw InvalidArgument("duplicate motion id '" + id + "'");
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw NumericError("vector for '" + id + "' is zero or non-finite");
    for (Eigen::Index k = 0; k < v.size(); ++k)
      store.values_.push_back(static_cast<float>(v[k] / norm));
    store.ids_.push_back(std::move(id));
  }
  return store;
}

std::vector<std::uint8_t> EmbeddingStore::encode() const {
  io::ByteWriter w;
  write_rows(w, kIndexMagic, dim_, ids_, values_);
  return w.data();
}

EmbeddingStore EmbeddingStore::decode(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  EmbeddingStore store;
  read_rows(r, kIndexMagic, store.dim_, store.ids_, store.values_);
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!seen.insert(store.ids_[i]).second)
      throw FormatError("duplicate motion id '" + store.ids_[i] + "'");
    double sq = 0.0;
    for (float x : store.vector(i)) sq += double{x} * x;
    if (!(std::abs(std::sqrt(sq) - 1.0) <= kUnitTolerance))
      throw FormatError("vector for '" + store.ids_[i] + "' is not unit norm");
  }
  return store;
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  io::write_file(path, encode());
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  return decode(io::read_file(path));
}

RankedList knn_query(const EmbeddingStore& store, std::span<const double> q,
                     int k, std::string query_id) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  RankedList out{std::move(query_id), {}};
  if (store.empty()) return out;
  if (q.size() != static_cast<std::size_t>(store.dim()))
    throw ShapeError("query has dimension " + std::to_string(q.size()) +
                     ", index has " + std::to_string(store.dim()));
  double sq = 0.0;
  for (double x : q) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw NumericError("query vector is zero or non-finite");

  const std::size_t n = store.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = store.vector(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) dot += v[j] * q[j];
    scores[i] = std::clamp(dot / norm, -1.0, 1.0);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& ids = store.ids();
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t take = std::min(n, static_cast<std::size_t>(k));
  std::partial_sort(order.begin(), order.begin() + take, order.end(), before);
  out.hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    out.hits.push_back({ids[order[i]], scores[order[i]]});
  return out;
}

std::vector<std::uint8_t> EmbeddingTable::encode() const {
  if (static_cast<std::size_t>(vectors.rows()) != ids.size())
    throw ShapeError("embedding table has mismatched ids and rows");
  std::vector<float> values(vectors.data(), vectors.data() + vectors.size());
  io::ByteWriter w;
  write_rows(w, kTableMagic, static_cast<int>(vectors.cols()), ids, values);
  return w.data();
}

EmbeddingTable EmbeddingTable::decode(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  EmbeddingTable t;
  int dim = 0;
  std::vector<float> values;
  read_rows(r, kTableMagic, dim, t.ids, values);
  t.vectors.resize(static_cast<Eigen::Index>(t.ids.size()), dim);
  std::copy(values.begin(), values.end(), t.vectors.data());
  return t;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  io::write_file(path, encode());
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  return decode(io::read_file(path));
}

EmbeddingStore build_store(const EmbeddingTable& table) {
  std::vector<std::pair<std::string, RowVector>> entries;
  entries.reserve(table.ids.size());
  for (std::size_t i = 0; i < table.ids.size(); ++i)
    entries.emplace_back(table.ids[i],
                         table.vectors.row(static_cast<Eigen::Index>(i)));
  return EmbeddingStore::build(std::move(entries),
                               static_cast<int>(table.vectors.cols()));
}

SnapshotHolder::SnapshotHolder(std::shared_ptr<const EmbeddingStore> initial)
    : current_(std::move(initial)) {}

std::shared_ptr<const EmbeddingStore> SnapshotHolder::current() const {
  std::lock_guard lock(mutex_);
  return current_;
}

void SnapshotHolder::replace(std::shared_ptr<const EmbeddingStore> next) {
  std::lock_guard lock(mutex_);
  current_ = std::move(next);
}

}  // namespace motret
