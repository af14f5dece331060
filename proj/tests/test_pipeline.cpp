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

#include <gtest/gtest.h>

#include <fstream>

#include "motret/checkpoint.hpp"
#include "motret/errors.hpp"
#include "motret/pipeline.hpp"
#include "support.hpp"

namespace motret {
namespace {

using testing::TempDir;

TrainConfig small_config() {
  return train_config_from_json(nlohmann::json::parse(R"({
    "motion_encoder": "mot", "text_encoder": "affine", "loss": "infonce",
    "d_common": 16, "lr": 0.001, "batch": 8, "max_steps": 6, "max_len": 16,
    "motion": {"model_dim": 8, "heads": 2, "depth": 1, "ffn_hidden": 16, "output_dim": 16},
    "text": {"output_dim": 16},
    "text_source": {"kind": "hashed", "sentence_dim": 32}
  })"));
}

TEST(TrainConfigJson, RoundTrips) {
  const TrainConfig c = small_config();
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(to_json(train_config_from_json(j)), j);
  EXPECT_EQ(j.at("d_common"), 16);
  EXPECT_EQ(j.at("motion_encoder"), "mot");
}

TEST(TrainConfigJson, RejectsUnknownKeysAndBadValues) {
  nlohmann::json j = to_json(small_config());
  j["learning_rate"] = 0.1;
  try {
    train_config_from_json(j);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  for (auto [key, value] : std::vector<std::pair<std::string, nlohmann::json>>{
           {"d_common", 1}, {"batch", 0}, {"tau_init", 0.0}, {"loss", "hinge"},
           {"motion_encoder", "cnn"}, {"lr", "fast"}}) {
    nlohmann::json bad = to_json(small_config());
    bad[key] = value;
    EXPECT_THROW(train_config_from_json(bad), InvalidArgument) << key;
  }
}

TEST(MotionSets, ManifestLoadMatchesInMemoryDataset) {
  TempDir dir("set");
  const SyntheticDataset data = generate_synthetic(6, 3, {.test_fraction = 0.5});
  write_dataset(data, dir.path);
  const DatasetManifest manifest = load_manifest(dir / "manifest.json");
  for (Split split : {Split::kTrain, Split::kTest}) {
    const MotionSet a = motion_set_of(data, split);
    const MotionSet b = load_motion_set(manifest, split);
    ASSERT_EQ(a.ids, b.ids);
    ASSERT_FALSE(a.ids.empty());
    for (std::size_t i = 0; i < a.ids.size(); ++i) {
      EXPECT_LT((a.parts[i] - b.parts[i]).cwiseAbs().maxCoeff(), 1e-5);
      EXPECT_EQ(a.captions[i].size(), b.captions[i].size());
    }
  }
}

TEST(Training, IsDeterministicAndReportsEveryStep) {
  const MotionSet data = motion_set_of(generate_synthetic(12, 1), Split::kTrain);
  const TrainConfig config = small_config();
  const TextInputSource text = make_text_source(config, data);
  std::vector<std::uint64_t> steps;
  const TrainResult a = train_model(config, data, text,
                                    [&](std::uint64_t s, double) { steps.push_back(s); });
  const TrainResult b = train_model(config, data, text);
  EXPECT_EQ(a.log.step_losses, b.log.step_losses);
  EXPECT_EQ(a.log.step_losses.size(), 6u);
  EXPECT_EQ(steps.size(), 6u);
  EXPECT_EQ(a.log.initial_loss, a.log.step_losses.front());
  const auto pa = a.state.model.parameters(), pb = b.state.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) ASSERT_EQ(pa[i]->value, pb[i]->value);
}

TEST(Training, RejectsMismatchedInputs) {
  const MotionSet data = motion_set_of(generate_synthetic(4, 1), Split::kTrain);
  TrainConfig config = small_config();
  const TextInputSource tokens =
      TextInputSource::hashed(TextVariant::kLstmAggregator, HashedFeaturizer{});
  EXPECT_THROW(train_model(config, data, tokens), InvalidArgument);
  EXPECT_THROW(train_model(config, MotionSet{}, make_text_source(config, data)),
               InvalidArgument);
  config.model.loss = LossKind::kTriplet;
  const MotionSet one = motion_set_of(generate_synthetic(1, 1), Split::kTrain);
  EXPECT_THROW(train_model(config, one, make_text_source(config, one)), InvalidArgument);
}

TEST(Encoding, TablesAgreeWithModelAndQueries) {
  const MotionSet data = motion_set_of(generate_synthetic(10, 2), Split::kTrain);
  const TrainConfig config = small_config();
  const TextInputSource text = make_text_source(config, data);
  const RetrievalModel model = train_model(config, data, text).state.model;

  const EmbeddingTable motions = encode_motion_set(model, data, 3);
  EXPECT_EQ(motions.ids, data.ids);
  const EmbeddingTable whole = encode_motion_set(model, data, 64);
  EXPECT_LT((motions.vectors - whole.vectors).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index i = 0; i < motions.vectors.rows(); ++i)
    EXPECT_NEAR(motions.vectors.row(i).norm(), 1.0, 1e-9);

  const auto captions = data.all_captions();
  const EmbeddingTable texts = encode_captions(model, text, captions, 4);
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const RowVector q = encode_query(model, text, captions[i].text);
    EXPECT_LT((q - texts.vectors.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Evaluation, SingleMotionIsFoundFirst) {
  const MotionSet data = motion_set_of(generate_synthetic(1, 4), Split::kTrain);
  const TrainConfig config = small_config();
  const TextInputSource text = make_text_source(config, data);
  ModelConfig mc = config.model;
  mc.text.input_dim = text.input_dim();
  const RetrievalModel model(mc, 0);
  const MetricsReport r = evaluate_model(model, text, data);
  EXPECT_EQ(r.items, 1);
  EXPECT_EQ(r.recall_at(1), 100.0);
  EXPECT_EQ(r.ndcg.at(0).source, "lexical");
}

TEST(Checkpoint, ReloadedModelEmbedsLikeTheOriginal) {
  TempDir dir("pipe_ckpt");
  const MotionSet data = motion_set_of(generate_synthetic(8, 5), Split::kTrain);
  const TrainConfig config = small_config();
  const TextInputSource text = make_text_source(config, data);
  const RetrievalModel model = train_model(config, data, text).state.model;
  save_model(model, text, dir / "m.menc", dir / "m.tenc");
  const LoadedModel back = load_model(dir / "m.menc", dir / "m.tenc");
  const Matrix a = encode_motion_set(model, data).vectors;
  const Matrix b = encode_motion_set(back.model, data).vectors;
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-4);
  const RowVector qa = encode_query(model, text, "a person walks");
  const RowVector qb = encode_query(back.model, *back.text_source, "a person walks");
  EXPECT_LT((qa - qb).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Sweep, WritesOneValidReportPerCell) {
  TempDir dir("sweep");
  const SyntheticDataset data = generate_synthetic(12, 6, {.test_fraction = 0.25});
  SweepConfig sweep;
  sweep.base = small_config();
  sweep.base.max_steps = 2;
  sweep.d_common = {8, 16};
  sweep.losses = {LossKind::kInfoNce, LossKind::kTriplet};
  const auto cells = run_sweep(sweep, motion_set_of(data, Split::kTrain),
                               motion_set_of(data, Split::kTest), dir.path);
  ASSERT_EQ(cells.size(), 4u);
  for (const SweepCell& cell : cells) {
    const std::string name = std::string(motion_variant_name(cell.encoder)) + "_" +
                             std::string(loss_name(cell.loss)) + "_d" +
                             std::to_string(cell.d_common) + ".json";
    std::ifstream in(dir / name);
    ASSERT_TRUE(in) << name;
    const nlohmann::json j = nlohmann::json::parse(in);
    EXPECT_NO_THROW(validate_report_json(j)) << name;
    EXPECT_EQ(to_json(cell.report), j);
  }
  std::ifstream tsv(dir / "sweep.tsv");
  int lines = 0;
  for (std::string line; std::getline(tsv, line);) ++lines;
  EXPECT_EQ(lines, 5);
  EXPECT_TRUE(std::filesystem::exists(dir / "sweep.txt"));
}

}  // namespace
}  // namespace motret
