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

// Model persistence. The motion encoder lives in a "MENC" container; the
// text encoder, both projection heads, the log-temperature and the text
// input source live in a companion "TENC" container. Both share one
// layout: magic, u32 json length, JSON config, u32 tensor count, then per
// tensor (u16 name length, name, u32 rank, rank x u32 dims, f32 payload).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "motret/common_space.hpp"

namespace motret {

struct TensorContainer {
  nlohmann::json config;
  ParameterSet tensors;
};

std::vector<std::uint8_t> encode_container(std::string_view magic,
                                           const TensorContainer& c);
TensorContainer decode_container(std::string_view magic,
                                 std::vector<std::uint8_t> bytes);

nlohmann::json to_json(const MotionEncoderConfig& c);
MotionEncoderConfig motion_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TextEncoderConfig& c);
TextEncoderConfig text_config_from_json(const nlohmann::json& j);
/// Model hyperparameters; unknown keys are rejected.
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

void save_motion_checkpoint(const MotionEncoder& encoder,
                            const std::filesystem::path& path);
MotionEncoder load_motion_checkpoint(const std::filesystem::path& path);

/// Everything a checkpoint pair restores. `text_source` is empty when the
/// model was trained on precomputed embedding files, which must then be
/// supplied again.
struct LoadedModel {
  RetrievalModel model;
  std::optional<TextInputSource> text_source;
};

void save_model(const RetrievalModel& model, const TextInputSource& source,
                const std::filesystem::path& motion_path,
                const std::filesystem::path& text_path);
LoadedModel load_model(const std::filesystem::path& motion_path,
                       const std::filesystem::path& text_path);

}  // namespace motret
