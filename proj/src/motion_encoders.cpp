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

#include "motret/motion_encoders.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "motret/errors.hpp"
#include "motret/nn.hpp"

namespace motret {

std::string_view motion_variant_name(MotionVariant v) {
  switch (v) {
    case MotionVariant::kBiGru: return "bigru";
    case MotionVariant::kUpperLowerGru: return "upper-lower-gru";
    case MotionVariant::kMot: return "mot";
  }
  return "mot";
}

MotionVariant parse_motion_variant(std::string_view name) {
  if (name == "bigru") return MotionVariant::kBiGru;
  if (name == "upper-lower-gru") return MotionVariant::kUpperLowerGru;
  if (name == "mot") return MotionVariant::kMot;
  throw InvalidArgument("unknown motion encoder '" + std::string(name) + "'");
}

int MotionEncoderConfig::embedding_dim() const {
  return variant == MotionVariant::kMot ? output_dim : 2 * hidden;
}

void MotionEncoderConfig::validate() const {
  if (max_len < 1) throw ShapeError("max_len must be >= 1");
  if (feature_mean.size() != feature_scale.size() ||
      (!feature_mean.empty() && feature_mean.size() != kPartFeatures))
    throw ShapeError("feature standardization needs 45 means and 45 scales");
  for (double s : feature_scale)
    if (!(s > 0.0) || !std::isfinite(s))
      throw ShapeError("feature scales must be positive");
  if (variant == MotionVariant::kMot) {
    if (depth < 1) throw ShapeError("depth must be >= 1");
    if (heads < 1 || model_dim % heads != 0)
      throw ShapeError("heads must divide model_dim");
    if (ffn_hidden < 1 || output_dim < 1)
      throw ShapeError("transformer widths must be positive");
  } else {
    if (hidden < 1) throw ShapeError("hidden must be >= 1");
    if (variant == MotionVariant::kBiGru && ffn_dim < 1)
      throw ShapeError("ffn_dim must be >= 1");
  }
}

void fit_feature_standardization(MotionEncoderConfig& config,
                                 std::span<const Matrix> part_sequences) {
  RowVector sum = RowVector::Zero(kPartFeatures);
  RowVector sq = RowVector::Zero(kPartFeatures);
  double frames = 0.0;
  for (const Matrix& seq : part_sequences) {
    if (seq.cols() != kPartFeatures)
      throw ShapeError("part sequences must have 45 columns");
    sum += seq.colwise().sum();
    sq += seq.cwiseAbs2().colwise().sum();
    frames += static_cast<double>(seq.rows());
  }
  if (frames < 1.0) throw InvalidArgument("no frames to fit standardization");
  config.feature_mean.resize(kPartFeatures);
  config.feature_scale.resize(kPartFeatures);
  for (int c = 0; c < kPartFeatures; ++c) {
    const double mean = sum[c] / frames;
    const double var = std::max(0.0, sq[c] / frames - mean * mean);
    config.feature_mean[c] = mean;
    config.feature_scale[c] = std::max(std::sqrt(var), 1e-3);
  }
}

MotionEncoder::MotionEncoder(const MotionEncoderConfig& config,
                             std::uint64_t seed)
    : config_(config) {
  config_.validate();
  nn::Rng rng(seed);
  switch (config_.variant) {
    case MotionVariant::kBiGru:
      nn::init_linear(params_, "ffn1", kPartFeatures, config_.ffn_dim, rng);
      nn::init_linear(params_, "ffn2", config_.ffn_dim, config_.ffn_dim, rng);
      nn::init_gru(params_, "gru_fwd", config_.ffn_dim, config_.hidden, rng);
      nn::init_gru(params_, "gru_bwd", config_.ffn_dim, config_.hidden, rng);
      break;
    case MotionVariant::kUpperLowerGru:
      nn::init_gru(params_, "gru_upper", kUpperParts * kFeatureDim,
                   config_.hidden, rng);
      nn::init_gru(params_, "gru_lower", kLowerParts * kFeatureDim,
                   config_.hidden, rng);
      break;
    case MotionVariant::kMot: {
      const int d = config_.model_dim;
      nn::init_linear(params_, "embed", kFeatureDim, d, rng);
      std::normal_distribution<double> dist(0.0, 0.02);
      Matrix temporal(config_.max_len, d), parts(kNumParts, d);
      for (Eigen::Index i = 0; i < temporal.size(); ++i)
        temporal.data()[i] = dist(rng);
      for (Eigen::Index i = 0; i < parts.size(); ++i)
        parts.data()[i] = dist(rng);
      params_.add("pos_time", std::move(temporal));
      params_.add("pos_part", std::move(parts));
      for (int l = 0; l < config_.depth; ++l) {
        const std::string block = "block" + std::to_string(l);
        nn::init_attention(params_, block + ".spatial", d, rng);
        nn::init_attention(params_, block + ".temporal", d, rng);
        nn::init_feed_forward(params_, block + ".ffn", d, config_.ffn_hidden,
                              rng);
      }
      nn::init_layer_norm(params_, "final_norm", d);
      nn::init_linear(params_, "head", d, config_.output_dim, rng);
      break;
    }
  }
}

MotionEncoder::MotionEncoder(const MotionEncoderConfig& config,
                             ParameterSet params)
    : config_(config), params_(std::move(params)) {
  MotionEncoder reference(config, 0);
  if (reference.params_.size() != params_.size())
    throw ShapeError("motion encoder checkpoint has " +
                     std::to_string(params_.size()) + " tensors, expected " +
                     std::to_string(reference.params_.size()));
  for (std::size_t i = 0; i < reference.params_.size(); ++i) {
    const Parameter& want = reference.params_[i];
    const Parameter& got = params_.get(want.name);
    if (got.value.rows() != want.value.rows() ||
        got.value.cols() != want.value.cols())
      throw ShapeError("motion encoder tensor '" + want.name +
                       "' has the wrong shape");
  }
}

namespace {

void check_batch(const PaddedBatch& batch) {
  if (batch.batch < 1) throw ShapeError("empty motion batch");
  if (batch.features.rows() !=
          static_cast<Eigen::Index>(batch.batch) * batch.max_len ||
      batch.features.cols() != kPartFeatures)
    throw ShapeError("padded batch features must be (B*max_len) x 45");
  if (batch.mask.size() != static_cast<std::size_t>(batch.features.rows()))
    throw ShapeError("padded batch mask size mismatch");
  for (int b = 0; b < batch.batch; ++b)
    if (!batch.real(b, 0)) throw ShapeError("empty sequence");
}

PaddedBatch standardized(const PaddedBatch& batch,
                         const MotionEncoderConfig& config) {
  PaddedBatch out = batch;
  const Eigen::Map<const RowVector> mean(config.feature_mean.data(),
                                         kPartFeatures);
  const Eigen::Map<const RowVector> scale(config.feature_scale.data(),
                                          kPartFeatures);
  for (Eigen::Index r = 0; r < out.features.rows(); ++r)
    if (out.mask[r])
      out.features.row(r) =
          (out.features.row(r) - mean).cwiseQuotient(scale);
  return out;
}

/// Time-major view of selected feature columns.
nn::Sequence time_major(ag::Tape& tape, const PaddedBatch& batch,
                        int first_col, int cols) {
  nn::Sequence seq;
  seq.steps = batch.max_len;
  seq.batch = batch.batch;
  seq.valid.resize(static_cast<std::size_t>(seq.steps) * seq.batch);
  Matrix x(static_cast<Eigen::Index>(seq.steps) * seq.batch, cols);
  for (int t = 0; t < seq.steps; ++t)
    for (int b = 0; b < seq.batch; ++b) {
      const Eigen::Index row = static_cast<Eigen::Index>(t) * seq.batch + b;
      x.row(row) = batch.frame(b, t).segment(first_col, cols);
      seq.valid[row] = batch.real(b, t) ? 1 : 0;
    }
  seq.inputs = tape.constant(std::move(x));
  return seq;
}

}  // namespace

ag::Var MotionEncoder::forward(ag::Tape& tape, const PaddedBatch& raw) {
  check_batch(raw);
  const PaddedBatch batch = config_.feature_mean.empty()
                                ? raw
                                : standardized(raw, config_);
  switch (config_.variant) {
    case MotionVariant::kBiGru: return bigru(tape, batch);
    case MotionVariant::kUpperLowerGru: return upper_lower(tape, batch);
    case MotionVariant::kMot: return mot(tape, batch, false);
  }
  throw ShapeError("unknown motion variant");
}

Matrix MotionEncoder::encode(const PaddedBatch& batch) const {
  ag::Tape tape;
  auto& self = const_cast<MotionEncoder&>(*this);
  return self.forward(tape, batch).value();
}

Matrix MotionEncoder::spatial_probe(const PaddedBatch& batch) const {
  if (config_.variant != MotionVariant::kMot)
    throw InvalidArgument("spatial probe needs the transformer encoder");
  check_batch(batch);
  ag::Tape tape;
  auto& self = const_cast<MotionEncoder&>(*this);
  return self
      .mot(tape,
           config_.feature_mean.empty() ? batch : standardized(batch, config_),
           true)
      .value();
}

ag::Var MotionEncoder::bigru(ag::Tape& tape, const PaddedBatch& batch) {
  nn::Sequence seq = time_major(tape, batch, 0, kPartFeatures);
  ag::Var lifted = nn::linear(tape, params_, "ffn1", seq.inputs);
  lifted = nn::linear(tape, params_, "ffn2", ag::gelu(lifted));
  seq.inputs = lifted;
  ag::Var fwd = nn::gru(tape, params_, "gru_fwd", seq, false).final_hidden;
  ag::Var bwd = nn::gru(tape, params_, "gru_bwd", seq, true).final_hidden;
  const ag::Var both[] = {fwd, bwd};
  return ag::concat_cols(both);
}

ag::Var MotionEncoder::upper_lower(ag::Tape& tape, const PaddedBatch& batch) {
  nn::Sequence upper =
      time_major(tape, batch, 0, kUpperParts * kFeatureDim);
  nn::Sequence lower = time_major(tape, batch, kUpperParts * kFeatureDim,
                                  kLowerParts * kFeatureDim);
  const ag::Var both[] = {
      nn::gru(tape, params_, "gru_upper", upper).final_hidden,
      nn::gru(tape, params_, "gru_lower", lower).final_hidden};
  return ag::concat_cols(both);
}

ag::Var MotionEncoder::mot(ag::Tape& tape, const PaddedBatch& batch,
                           bool probe) {
  const int frames = batch.max_len;
  if (frames > config_.max_len)
    throw ShapeError("batch length " + std::to_string(frames) +
                     " exceeds encoder max_len " +
                     std::to_string(config_.max_len));
  const int n_tokens = batch.batch * frames * kNumParts;
  auto token = [frames](int b, int t, int p) {
    return (b * frames + t) * kNumParts + p;
  };

  Matrix x(n_tokens, kFeatureDim);
  std::vector<int> time_index(n_tokens), part_index(n_tokens);
  auto spatial = std::make_shared<ag::AttentionLayout>();
  auto temporal = std::make_shared<ag::AttentionLayout>();
  spatial->valid.resize(n_tokens);
  for (int b = 0; b < batch.batch; ++b)
    for (int t = 0; t < frames; ++t) {
      const bool real = batch.real(b, t);
      std::vector<int> group;
      for (int p = 0; p < kNumParts; ++p) {
        const int r = token(b, t, p);
        x.row(r) = batch.frame(b, t).segment(p * kFeatureDim, kFeatureDim);
        time_index[r] = t;
        part_index[r] = p;
        spatial->valid[r] = real ? 1 : 0;
        group.push_back(r);
      }
      if (real) spatial->groups.push_back(std::move(group));
    }
  temporal->valid = spatial->valid;
  for (int b = 0; b < batch.batch; ++b)
    for (int p = 0; p < kNumParts; ++p) {
      std::vector<int> group;
      for (int t = 0; t < frames; ++t) group.push_back(token(b, t, p));
      temporal->groups.push_back(std::move(group));
    }

  ag::Var h = nn::linear(tape, params_, "embed", tape.constant(std::move(x)));
  h = ag::add(h, ag::gather_rows(tape.param(params_.get("pos_time")),
                                 std::move(time_index)));
  h = ag::add(h, ag::gather_rows(tape.param(params_.get("pos_part")),
                                 std::move(part_index)));

  for (int l = 0; l < config_.depth; ++l) {
    const std::string block = "block" + std::to_string(l);
    h = nn::attention_sublayer(tape, params_, block + ".spatial", h,
                               config_.heads, spatial);
    if (probe) return h;
    h = nn::attention_sublayer(tape, params_, block + ".temporal", h,
                               config_.heads, temporal);
    h = nn::feed_forward_sublayer(tape, params_, block + ".ffn", h);
  }
  h = nn::layer_norm(tape, params_, "final_norm", h);

  std::vector<std::vector<int>> pools(static_cast<std::size_t>(batch.batch));
  for (int b = 0; b < batch.batch; ++b)
    for (int t = 0; t < frames; ++t)
      if (batch.real(b, t))
        for (int p = 0; p < kNumParts; ++p) pools[b].push_back(token(b, t, p));
  ag::Var pooled = ag::segment_mean(h, std::move(pools));
  return nn::linear(tape, params_, "head", pooled);
}

namespace {

Matrix encode_checked(const PaddedBatch& batch, const MotionEncoder& encoder,
                      MotionVariant want) {
  if (encoder.config().variant != want)
    throw InvalidArgument("encoder variant is " +
                          std::string(motion_variant_name(
                              encoder.config().variant)) +
                          ", expected " +
                          std::string(motion_variant_name(want)));
  return encoder.encode(batch);
}

}  // namespace

Matrix bigru_encode(const PaddedBatch& batch, const MotionEncoder& encoder) {
  return encode_checked(batch, encoder, MotionVariant::kBiGru);
}

Matrix upper_lower_encode(const PaddedBatch& batch,
                          const MotionEncoder& encoder) {
  return encode_checked(batch, encoder, MotionVariant::kUpperLowerGru);
}

Matrix mot_encode(const PaddedBatch& batch, const MotionEncoder& encoder) {
  return encode_checked(batch, encoder, MotionVariant::kMot);
}

}  // namespace motret
