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

// Shared text-motion embedding space: projections, similarity, the two
// metric-learning losses, deterministic training and gradient checking.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "motret/autograd.hpp"
#include "motret/motion_encoders.hpp"
#include "motret/text_encoding.hpp"

namespace motret {

/// u.v / (|u| |v|). Throws NumericError for a zero vector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Loss value plus its gradient with respect to the similarity matrix and,
/// for InfoNCE, the log-temperature.
struct LossGradient {
  double value = 0.0;
  Matrix d_similarity;
  double d_log_tau = 0.0;
};

/// Symmetric hardest-negative triplet loss over a B x B similarity matrix
/// whose entry (i, j) compares motion i with caption j. Requires B >= 2.
/// Subgradient at a hinge kink is 0; ties for the hardest negative resolve
/// to the lowest index.
double triplet_loss(const Matrix& similarity, double margin);
LossGradient triplet_loss_gradient(const Matrix& similarity, double margin);

/// Symmetric cross-entropy over rows and columns of S / tau.
double infonce_loss(const Matrix& similarity, double tau);
LossGradient infonce_loss_gradient(const Matrix& similarity, double log_tau);

/// Smallest distance of any hinge argument from 0, and of any hardest
/// negative from the runner-up; the triplet loss is differentiable when
/// this is positive.
double triplet_kink_distance(const Matrix& similarity, double margin);

namespace ag {
Var triplet_loss(Var similarity, double margin);
Var infonce_loss(Var similarity, Var log_tau);
}  // namespace ag

enum class LossKind : std::uint8_t { kTriplet, kInfoNce };
std::string_view loss_name(LossKind k);
LossKind parse_loss(std::string_view name);

/// Affine map into the common space, optionally followed by row-wise L2
/// normalization.
class ProjectionHead {
 public:
  ProjectionHead(int in_dim, int out_dim, bool l2_normalize,
                 std::uint64_t seed);
  ProjectionHead(int in_dim, int out_dim, bool l2_normalize,
                 ParameterSet params);

  ag::Var forward(ag::Tape& tape, ag::Var x);
  Matrix apply(const Matrix& x) const;

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  bool normalizes() const { return l2_normalize_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  int in_dim_;
  int out_dim_;
  bool l2_normalize_;
  ParameterSet params_;
};

struct ModelConfig {
  MotionEncoderConfig motion;
  TextEncoderConfig text;
  int d_common = 256;
  bool l2_normalize = true;
  LossKind loss = LossKind::kInfoNce;
  double margin = 0.2;
  double tau_init = 0.07;
};

/// Both encoders, both projection heads and the learned log-temperature.
class RetrievalModel {
 public:
  RetrievalModel(const ModelConfig& config, std::uint64_t seed);
  RetrievalModel(const ModelConfig& config, MotionEncoder motion,
                 TextEncoder text, ProjectionHead motion_head,
                 ProjectionHead text_head, double log_tau);

  const ModelConfig& config() const { return config_; }
  MotionEncoder& motion_encoder() { return motion_; }
  const MotionEncoder& motion_encoder() const { return motion_; }
  TextEncoder& text_encoder() { return text_; }
  const TextEncoder& text_encoder() const { return text_; }
  ProjectionHead& motion_head() { return motion_head_; }
  const ProjectionHead& motion_head() const { return motion_head_; }
  ProjectionHead& text_head() { return text_head_; }
  const ProjectionHead& text_head() const { return text_head_; }
  double log_tau() const { return temperature_[0].value(0, 0); }
  double tau() const;

  /// Every trainable tensor, in a fixed order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  struct Forward {
    ag::Var motion;      // B x d_common
    ag::Var text;        // B x d_common
    ag::Var similarity;  // B x B, (motion i, caption j)
    ag::Var loss;        // 1 x 1
  };
  Forward forward(ag::Tape& tape, const PaddedBatch& motions,
                  const TextBatch& texts, LossKind loss);

  Matrix embed_motions(const PaddedBatch& motions) const;
  Matrix embed_texts(const TextBatch& texts) const;

 private:
  ModelConfig config_;
  MotionEncoder motion_;
  TextEncoder text_;
  ProjectionHead motion_head_;
  ProjectionHead text_head_;
  ParameterSet temperature_;  // single "log_tau" tensor
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainState {
  RetrievalModel model;
  AdamConfig adam;
  std::vector<Matrix> first_moment;   // aligned with model.parameters()
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  TrainState(RetrievalModel m, AdamConfig a, std::uint64_t s);
};

struct TrainBatch {
  PaddedBatch motions;
  TextBatch texts;
};

struct StepResult {
  TrainState state;
  double loss;
};

/// Forward, analytic backward and one Adam update. Pure: `state` is not
/// modified. Throws NumericError naming the step on non-finite values.
StepResult train_step(const TrainState& state, const TrainBatch& batch,
                      LossKind loss);
/// In-place form used by the training loop; returns the pre-update loss.
double train_step_inplace(TrainState& state, const TrainBatch& batch,
                          LossKind loss);

/// Loss of the current parameters without updating them.
double evaluate_loss(const RetrievalModel& model, const TrainBatch& batch,
                     LossKind loss);

struct TensorGradReport {
  std::string name;
  std::size_t entries = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool within_tolerance = true;
};

struct GradCheckReport {
  std::vector<TensorGradReport> tensors;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  double loss = 0.0;
  /// Triplet only: distance of the check point from the nearest kink.
  double kink_distance = 0.0;
  bool passed() const;
};

struct GradCheckConfig {
  enum class Target { kFullModel, kProjectionOnly };
  Target target = Target::kFullModel;
  ModelConfig model;
  int batch = 2;
  int frames = 4;   // longest sequence; others are shorter
  int max_len = 6;  // padded length (>= frames)
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative errors are taken against max(|analytic|, |numeric|,
  /// floor_fraction * largest |numeric| in the tensor).
  double floor_fraction = 1e-2;
};

/// Compares analytic gradients with central differences on every entry of
/// every trainable tensor, on a random instance drawn from `seed`.
GradCheckReport grad_check(const GradCheckConfig& config, std::uint64_t seed);

}  // namespace motret
