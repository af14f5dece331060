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

// Motion encoders: padded part-level batches -> fixed-size embeddings.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "motret/autograd.hpp"
#include "motret/motion_data.hpp"

namespace motret {

enum class MotionVariant : std::uint8_t { kBiGru, kUpperLowerGru, kMot };
std::string_view motion_variant_name(MotionVariant v);
MotionVariant parse_motion_variant(std::string_view name);

struct MotionEncoderConfig {
  MotionVariant variant = MotionVariant::kMot;
  /// Longest padded batch the encoder accepts; sizes the temporal
  /// positional table of the transformer.
  int max_len = 200;

  // bigru / upper-lower-gru
  int ffn_dim = 64;  // width of the bigru input lift
  int hidden = 128;  // per-direction (bigru) or per-stream (upper-lower)

  // mot
  int depth = 4;
  int heads = 4;
  int model_dim = 128;
  int ffn_hidden = 256;
  int output_dim = 256;

  /// Per-feature standardization applied to real frames before encoding:
  /// (x - feature_mean) / feature_scale. Empty means identity.
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;

  /// Embedding width: 2*hidden for the recurrent variants, output_dim for
  /// the transformer.
  int embedding_dim() const;
  void validate() const;
};

/// Sets the standardization statistics from training sequences (each
/// T x 45). Scales are floored at 1e-3 so constant features stay finite.
void fit_feature_standardization(MotionEncoderConfig& config,
                                 std::span<const Matrix> part_sequences);

/// Upper body = torso + both arms; lower body = both legs.
inline constexpr int kUpperParts = 3;
inline constexpr int kLowerParts = 2;

class MotionEncoder {
 public:
  MotionEncoder(const MotionEncoderConfig& config, std::uint64_t seed);
  MotionEncoder(const MotionEncoderConfig& config, ParameterSet params);

  const MotionEncoderConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  int embedding_dim() const { return config_.embedding_dim(); }

  /// B x embedding_dim.
  ag::Var forward(ag::Tape& tape, const PaddedBatch& batch);
  Matrix encode(const PaddedBatch& batch) const;

  /// Transformer tokens, row (b*max_len + t)*5 + p, right after the first
  /// spatial sublayer. Exposed for locality checks.
  Matrix spatial_probe(const PaddedBatch& batch) const;

 private:
  ag::Var bigru(ag::Tape& tape, const PaddedBatch& batch);
  ag::Var upper_lower(ag::Tape& tape, const PaddedBatch& batch);
  ag::Var mot(ag::Tape& tape, const PaddedBatch& batch, bool probe);

  MotionEncoderConfig config_;
  ParameterSet params_;
};

/// Free-function forms of the three encoders; each checks that the
/// encoder has the matching variant.
Matrix bigru_encode(const PaddedBatch& batch, const MotionEncoder& encoder);
Matrix upper_lower_encode(const PaddedBatch& batch,
                          const MotionEncoder& encoder);
Matrix mot_encode(const PaddedBatch& batch, const MotionEncoder& encoder);

}  // namespace motret
