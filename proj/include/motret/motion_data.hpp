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

// Skeleton sequences, body-part aggregation, batching and dataset ingestion.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "motret/autograd.hpp"

namespace motret {

inline constexpr int kFeatureDim = 9;  // 6 rotation + 3 position components
inline constexpr int kNumParts = 5;
inline constexpr int kPartFeatures = kNumParts * kFeatureDim;

enum class BodyPart : std::uint8_t {
  kTorso = 0,
  kLeftArm = 1,
  kRightArm = 2,
  kLeftLeg = 3,
  kRightLeg = 4,
};

std::string_view part_name(BodyPart part);
BodyPart parse_part(std::string_view name);

/// Total joint -> body-part assignment.
class SkeletonTopology {
 public:
  /// Throws InvalidArgument unless every part receives at least one joint.
  explicit SkeletonTopology(std::vector<BodyPart> part_map,
                            std::string name = "custom");

  /// Named presets: "kit21" (KIT-ML, 21 joints) and "humanml22" (SMPL
  /// ordering used by HumanML3D, 22 joints).
  static SkeletonTopology preset(std::string_view name);

  int joint_count() const { return static_cast<int>(part_map_.size()); }
  BodyPart part_of(int joint) const { return part_map_.at(joint); }
  const std::vector<int>& joints_of(BodyPart part) const {
    return members_[static_cast<int>(part)];
  }
  const std::vector<BodyPart>& part_map() const { return part_map_; }
  const std::string& name() const { return name_; }

 private:
  std::vector<BodyPart> part_map_;
  std::array<std::vector<int>, kNumParts> members_;
  std::string name_;
};

/// T x J x 9 per-joint features, stored as a T x (J*9) matrix whose row t
/// holds joints in order, 9 features each.
struct SkeletonSequence {
  std::string motion_id;
  Matrix frames;
  float fps = 20.0f;

  int length() const { return static_cast<int>(frames.rows()); }
  int joint_count() const {
    return static_cast<int>(frames.cols() / kFeatureDim);
  }
  double at(int t, int joint, int d) const {
    return frames(t, joint * kFeatureDim + d);
  }
};

/// Throws FormatError unless T >= 1, J >= 1, D == 9 and all values finite.
void validate_sequence(const SkeletonSequence& seq);

/// Binary "MOTR" container: magic, u32 T, u32 J, u32 D, f32 fps, then
/// T*J*D little-endian f32 in (t, j, d) order. Values are written as f32.
void save_motion(const SkeletonSequence& seq,
                 const std::filesystem::path& path);
std::vector<std::uint8_t> encode_motion(const SkeletonSequence& seq);
SkeletonSequence decode_motion(std::vector<std::uint8_t> bytes,
                               std::string motion_id);
/// Loads and checks J against the topology.
SkeletonSequence load_motion(const std::filesystem::path& path,
                             const SkeletonTopology& topology,
                             std::string motion_id = {});

/// Per-frame mean of member-joint features: returns T x 45, column
/// p*9 + d holding feature d of part p.
Matrix aggregate_body_parts(const SkeletonSequence& seq,
                            const SkeletonTopology& topology);

/// Variable-length part sequences padded to a common length.
/// `features` is (B*max_len) x 45 with row b*max_len + t.
struct PaddedBatch {
  int batch = 0;
  int max_len = 0;
  Matrix features;
  std::vector<char> mask;  // B*max_len, true for real frames
  std::vector<int> lengths;

  bool real(int b, int t) const { return mask[b * max_len + t] != 0; }
  auto frame(int b, int t) const { return features.row(b * max_len + t); }
};

/// Center-crops sequences longer than `max_len` (lower start on ties) and
/// zero-pads shorter ones at the tail.
PaddedBatch pad_and_mask(const std::vector<Matrix>& part_sequences,
                         int max_len);

struct CaptionRecord {
  std::string caption_id;
  std::string motion_id;
  std::string text;
};

enum class Split : std::uint8_t { kTrain, kVal, kTest };
std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct ManifestEntry {
  std::string motion_id;
  std::filesystem::path path;  // relative to the manifest directory
  Split split = Split::kTrain;
  std::vector<CaptionRecord> captions;
};

struct DatasetManifest {
  SkeletonTopology topology = SkeletonTopology::preset("kit21");
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::filesystem::path motion_path(const ManifestEntry& e) const {
    return e.path.is_absolute() ? e.path : base_dir / e.path;
  }
  std::vector<const ManifestEntry*> entries_in(Split split) const;
  std::vector<CaptionRecord> captions_in(Split split) const;
};

/// Checks unique motion ids, unique caption ids, non-blank caption text and
/// that every caption references its own entry.
void validate_manifest(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path);

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<SkeletonSequence> motions;  // aligned with manifest.entries
  std::vector<CaptionRecord> captions;
};

struct SyntheticOptions {
  int min_frames = 24;
  int max_frames = 40;
  float fps = 20.0f;
  /// Fraction of motions assigned to the test split; the rest are train.
  double test_fraction = 0.0;
};

/// Deterministic text-motion pairs. Each motion moves each body part at
/// one of three speeds (still / slow / fast); its caption names the moving
/// parts and their speeds, so distinct parameter tuples give distinct text.
SyntheticDataset generate_synthetic(int n_pairs, std::uint64_t seed,
                                    const SyntheticOptions& options = {});

/// Writes manifest.json plus motions/<id>.motr under `dir`.
void write_dataset(const SyntheticDataset& data,
                   const std::filesystem::path& dir);

}  // namespace motret
