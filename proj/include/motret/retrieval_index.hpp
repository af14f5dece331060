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

#pragma once

// Exact cosine top-k search over unit-normalized motion embeddings.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "motret/autograd.hpp"

namespace motret {

/// Immutable id -> unit vector store. Vectors are renormalized on ingest and
/// kept as f32; scores are accumulated in double.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  /// Throws InvalidArgument on a duplicate id (naming it), ShapeError on a
  /// dimension mismatch and NumericError on a zero or non-finite vector.
  /// `dim` fixes the dimension of an empty store.
  static EmbeddingStore build(
      std::vector<std::pair<std::string, RowVector>> entries, int dim = 0);

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> vector(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(dim_),
            static_cast<std::size_t>(dim_)};
  }

  /// "MIDX": magic, u32 d, u32 n, then per entry u16 id length, UTF-8 id,
  /// d f32. Loading checks unit norms and unique ids.
  std::vector<std::uint8_t> encode() const;
  static EmbeddingStore decode(std::vector<std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);

 private:
  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> values_;  // size() x dim_, row-major
};

struct RankedHit {
  std::string motion_id;
  double score = 0.0;
};

/// Scores non-increasing; equal scores ordered by ascending id.
struct RankedList {
  std::string query_id;
  std::vector<RankedHit> hits;
};

/// The k stored entries most cosine-similar to `q` (fewer only when the
/// store is smaller). Throws ShapeError on a dimension mismatch,
/// InvalidArgument when k < 1 and NumericError on a zero query.
RankedList knn_query(const EmbeddingStore& store, std::span<const double> q,
                     int k, std::string query_id = {});

/// Ordered (id, vector) table used for encoded motion and caption sets.
/// Same layout as the index snapshot under the magic "EMBS"; vectors are
/// stored as given.
struct EmbeddingTable {
  std::vector<std::string> ids;
  Matrix vectors;  // ids.size() x d

  std::vector<std::uint8_t> encode() const;
  static EmbeddingTable decode(std::vector<std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path);
};

EmbeddingStore build_store(const EmbeddingTable& table);

/// Shared current snapshot for concurrent readers. Readers keep the
/// snapshot they obtained alive; replace() swaps in a new one atomically.
class SnapshotHolder {
 public:
  explicit SnapshotHolder(std::shared_ptr<const EmbeddingStore> initial =
                              std::make_shared<const EmbeddingStore>());
  std::shared_ptr<const EmbeddingStore> current() const;
  void replace(std::shared_ptr<const EmbeddingStore> next);

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const EmbeddingStore> current_;
};

}  // namespace motret
