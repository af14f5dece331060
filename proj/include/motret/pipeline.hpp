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

// End-to-end driver: training configs, dataset loading, the training loop,
// batch encoding, split evaluation and the hyperparameter sweep.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "motret/common_space.hpp"
#include "motret/evaluation.hpp"
#include "motret/retrieval_index.hpp"

namespace motret {

/// Where caption inputs come from during training.
struct TextSourceConfig {
  enum class Kind { kHashed, kFiles, kVocabulary };
  Kind kind = Kind::kHashed;
  HashedFeaturizer featurizer;
  std::filesystem::path sentence_file;  // kFiles, affine encoder
  std::filesystem::path token_file;     // kFiles, recurrent aggregator
};

struct TrainConfig {
  ModelConfig model;
  TextSourceConfig text_source;
  AdamConfig adam;
  int batch_size = 32;
  int epochs = 10;
  /// Stops after this many updates when positive, whatever `epochs` says.
  int max_steps = 0;
  std::uint64_t seed = 0;
  Split split = Split::kTrain;
  /// Fit per-feature motion standardization on the training set.
  bool standardize_features = true;
};

/// Flat JSON keys: motion_encoder, text_encoder, loss, d_common, margin,
/// tau_init, l2_normalize, lr, batch, epochs, max_steps, seed, max_len,
/// split, standardize_features, plus optional "motion", "text" and
/// "text_source" objects for encoder widths and caption inputs. Unknown keys
/// are rejected.
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Part-aggregated motions, each T x 45, with their ids and captions.
struct MotionSet {
  std::vector<std::string> ids;
  std::vector<Matrix> parts;
  std::vector<std::vector<CaptionRecord>> captions;

  std::vector<CaptionRecord> all_captions() const;
};

MotionSet load_motion_set(const DatasetManifest& manifest, Split split);
MotionSet motion_set_of(const SyntheticDataset& data, Split split);

/// Builds the caption input source a config asks for. A vocabulary source
/// is built from the captions of `data`.
TextInputSource make_text_source(const TrainConfig& config,
                                 const MotionSet& data);

struct TrainLog {
  std::vector<double> step_losses;  // pre-update loss of every step
  double initial_loss = 0.0;
  /// Loss of the final parameters over the first training batch.
  double final_loss = 0.0;
};

struct TrainResult {
  TrainState state;
  TrainLog log;
};

using StepCallback = std::function<void(std::uint64_t step, double loss)>;

/// Each epoch visits every motion once in a seeded order, pairing it with
/// one of its captions drawn at random.
TrainResult train_model(const TrainConfig& config, const MotionSet& data,
                        const TextInputSource& text,
                        const StepCallback& on_step = {});

/// Row i of the result embeds data.ids[i].
EmbeddingTable encode_motion_set(const RetrievalModel& model,
                                 const MotionSet& data, int batch_size = 64);
EmbeddingTable encode_captions(const RetrievalModel& model,
                               const TextInputSource& text,
                               std::span<const CaptionRecord> captions,
                               int batch_size = 64);
RowVector encode_query(const RetrievalModel& model,
                       const TextInputSource& text, std::string_view query);

/// Deduplicated captions of `data` ranked against all of its motions, with
/// lexical relevance plus any supplied external matrices.
MetricsReport evaluate_model(const RetrievalModel& model,
                             const TextInputSource& text, const MotionSet& data,
                             std::span<const RelevanceMatrix> external = {});

struct SweepConfig {
  TrainConfig base;
  std::vector<int> d_common{8, 16, 64, 256};
  std::vector<LossKind> losses{LossKind::kInfoNce};
  std::vector<MotionVariant> encoders{MotionVariant::kMot};
};

struct SweepCell {
  MotionVariant encoder;
  LossKind loss;
  int d_common;
  MetricsReport report;
};

/// Trains and evaluates every (encoder, loss, d_common) cell on `train`,
/// reporting on `eval`. Writes <out>/<encoder>_<loss>_d<d>.json, a TSV
/// (sweep.tsv) and an aligned table (sweep.txt) when `out_dir` is set.
std::vector<SweepCell> run_sweep(const SweepConfig& config,
                                 const MotionSet& train, const MotionSet& eval,
                                 const std::optional<std::filesystem::path>&
                                     out_dir = std::nullopt);

}  // namespace motret
