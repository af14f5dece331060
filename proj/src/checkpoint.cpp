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

#include "motret/checkpoint.hpp"

#include <cmath>

#include "motret/binary_io.hpp"
#include "motret/errors.hpp"

namespace motret {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr std::string_view kMotionMagic = "MENC";
constexpr std::string_view kTextMagic = "TENC";

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                    std::string_view what) {
  if (!j.is_object())
    throw FormatError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto k : keys) known = known || key == k;
    if (!known)
      throw FormatError("unknown key '" + key + "' in " + std::string(what));
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::vector<std::uint8_t> encode_container(std::string_view magic,
                                           const TensorContainer& c) {
  io::ByteWriter w;
  w.magic(magic);
  const std::string header = c.config.dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  std::vector<float> payload;
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    const Parameter& p = c.tensors[i];
    w.short_string(p.name);
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(p.value.rows()));
    w.u32(static_cast<std::uint32_t>(p.value.cols()));
    payload.assign(p.value.data(), p.value.data() + p.value.size());
    w.f32s(payload);
  }
  return w.data();
}

TensorContainer decode_container(std::string_view magic,
                                 std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic(magic);
  TensorContainer c;
  const std::uint32_t header_len = r.u32("config length");
  const std::string header = r.bytes(header_len, "config");
  try {
    c.config = json::parse(header);
  } catch (const json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint config: ") + e.what());
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<float> payload;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.short_string("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank < 1 || rank > 2)
      throw FormatError("tensor '" + name + "' has unsupported rank " +
                        std::to_string(rank));
    std::uint32_t rows = 1, cols = r.u32("tensor dim");
    if (rank == 2) {
      rows = cols;
      cols = r.u32("tensor dim");
    }
    const std::uint64_t n = std::uint64_t{rows} * cols;
    if (n * 4 > r.remaining())
      throw FormatError("truncated input while reading tensor '" + name + "'");
    payload.resize(n);
    r.f32s(payload, "tensor payload");
    Matrix value(rows, cols);
    for (std::uint64_t k = 0; k < n; ++k) {
      if (!std::isfinite(payload[k]))
        throw FormatError("non-finite value in tensor '" + name + "'");
      value.data()[k] = payload[k];
    }
    if (c.tensors.contains(name))
      throw FormatError("duplicate tensor '" + name + "'");
    c.tensors.add(name, std::move(value));
  }
  r.expect_end("checkpoint");
  return c;
}

json to_json(const MotionEncoderConfig& c) {
  json j{{"variant", motion_variant_name(c.variant)},
         {"max_len", c.max_len},
         {"ffn_dim", c.ffn_dim},
         {"hidden", c.hidden},
         {"depth", c.depth},
         {"heads", c.heads},
         {"model_dim", c.model_dim},
         {"ffn_hidden", c.ffn_hidden},
         {"output_dim", c.output_dim}};
  if (!c.feature_mean.empty()) {
    j["feature_mean"] = c.feature_mean;
    j["feature_scale"] = c.feature_scale;
  }
  return j;
}

MotionEncoderConfig motion_config_from_json(const json& j) {
  reject_unknown(j,
                 {"variant", "max_len", "ffn_dim", "hidden", "depth", "heads",
                  "model_dim", "ffn_hidden", "output_dim", "feature_mean",
                  "feature_scale"},
                 "motion encoder config");
  MotionEncoderConfig c;
  if (j.contains("variant"))
    c.variant = parse_motion_variant(j.at("variant").get<std::string>());
  read_opt(j, "max_len", c.max_len);
  read_opt(j, "ffn_dim", c.ffn_dim);
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "depth", c.depth);
  read_opt(j, "heads", c.heads);
  read_opt(j, "model_dim", c.model_dim);
  read_opt(j, "ffn_hidden", c.ffn_hidden);
  read_opt(j, "output_dim", c.output_dim);
  read_opt(j, "feature_mean", c.feature_mean);
  read_opt(j, "feature_scale", c.feature_scale);
  c.validate();
  return c;
}

json to_json(const TextEncoderConfig& c) {
  return {{"variant", text_variant_name(c.variant)},
          {"input_dim", c.input_dim},
          {"output_dim", c.output_dim},
          {"layers", c.layers},
          {"embed_dim", c.embed_dim}};
}

TextEncoderConfig text_config_from_json(const json& j) {
  reject_unknown(j, {"variant", "input_dim", "output_dim", "layers",
                     "embed_dim"},
                 "text encoder config");
  TextEncoderConfig c;
  if (j.contains("variant"))
    c.variant = parse_text_variant(j.at("variant").get<std::string>());
  read_opt(j, "input_dim", c.input_dim);
  read_opt(j, "output_dim", c.output_dim);
  read_opt(j, "layers", c.layers);
  read_opt(j, "embed_dim", c.embed_dim);
  return c;
}

json to_json(const ModelConfig& c) {
  return {{"motion", to_json(c.motion)},
          {"text", to_json(c.text)},
          {"d_common", c.d_common},
          {"l2_normalize", c.l2_normalize},
          {"loss", loss_name(c.loss)},
          {"margin", c.margin},
          {"tau_init", c.tau_init}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j, {"motion", "text", "d_common", "l2_normalize", "loss",
                     "margin", "tau_init"},
                 "model config");
  ModelConfig c;
  if (j.contains("motion")) c.motion = motion_config_from_json(j.at("motion"));
  if (j.contains("text")) c.text = text_config_from_json(j.at("text"));
  read_opt(j, "d_common", c.d_common);
  read_opt(j, "l2_normalize", c.l2_normalize);
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  read_opt(j, "margin", c.margin);
  read_opt(j, "tau_init", c.tau_init);
  if (c.d_common < 2) throw InvalidArgument("d_common must be >= 2");
  if (!(c.margin >= 0.0)) throw InvalidArgument("margin must be >= 0");
  if (!(c.tau_init > 0.0)) throw InvalidArgument("tau_init must be positive");
  return c;
}

namespace {

void copy_prefixed(const ParameterSet& from, const std::string& prefix,
                   ParameterSet& to) {
  for (std::size_t i = 0; i < from.size(); ++i)
    to.add(prefix + from[i].name, from[i].value);
}

ParameterSet take_prefixed(const ParameterSet& from, const std::string& prefix) {
  ParameterSet out;
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i].name.starts_with(prefix))
      out.add(from[i].name.substr(prefix.size()), from[i].value);
  return out;
}

void check_version(const json& config, std::string_view what) {
  if (!config.is_object() || !config.contains("format_version") ||
      config.at("format_version") != kFormatVersion)
    throw FormatError(std::string(what) + " has an unsupported format version");
}

json source_to_json(const TextInputSource& source) {
  if (const HashedFeaturizer* f = source.featurizer())
    return {{"kind", "hashed"},
            {"sentence_dim", f->sentence_dim},
            {"token_dim", f->token_dim},
            {"max_ngram", f->max_ngram},
            {"seed", f->seed}};
  if (const Vocabulary* v = source.vocab())
    return {{"kind", "vocabulary"}, {"tokens", v->tokens()}};
  return {{"kind", "files"}};
}

std::optional<TextInputSource> source_from_json(const json& j,
                                                TextVariant variant) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "hashed") {
    HashedFeaturizer f;
    f.sentence_dim = j.at("sentence_dim").get<int>();
    f.token_dim = j.at("token_dim").get<int>();
    f.max_ngram = j.at("max_ngram").get<int>();
    f.seed = j.at("seed").get<std::uint64_t>();
    return TextInputSource::hashed(variant, f);
  }
  if (kind == "vocabulary")
    return TextInputSource::vocabulary(
        Vocabulary::from_tokens(j.at("tokens").get<std::vector<std::string>>()));
  if (kind == "files") return std::nullopt;
  throw FormatError("unknown text source kind '" + kind + "'");
}

}  // namespace

void save_motion_checkpoint(const MotionEncoder& encoder,
                            const std::filesystem::path& path) {
  TensorContainer c{{{"format_version", kFormatVersion},
                     {"motion", to_json(encoder.config())}},
                    encoder.params()};
  io::write_file(path, encode_container(kMotionMagic, c));
}

MotionEncoder load_motion_checkpoint(const std::filesystem::path& path) {
  TensorContainer c = decode_container(kMotionMagic, io::read_file(path));
  check_version(c.config, "motion checkpoint");
  return MotionEncoder(motion_config_from_json(c.config.at("motion")),
                       std::move(c.tensors));
}

void save_model(const RetrievalModel& model, const TextInputSource& source,
                const std::filesystem::path& motion_path,
                const std::filesystem::path& text_path) {
  if (source.variant() != model.config().text.variant)
    throw InvalidArgument("text source does not match the text encoder");
  save_motion_checkpoint(model.motion_encoder(), motion_path);

  TensorContainer c;
  c.config = {{"format_version", kFormatVersion},
              {"model", to_json(model.config())},
              {"text_source", source_to_json(source)}};
  copy_prefixed(model.text_encoder().params(), "text.", c.tensors);
  copy_prefixed(model.motion_head().params(), "motion_head.", c.tensors);
  copy_prefixed(model.text_head().params(), "text_head.", c.tensors);
  Matrix log_tau(1, 1);
  log_tau(0, 0) = model.log_tau();
  c.tensors.add("log_tau", std::move(log_tau));
  io::write_file(text_path, encode_container(kTextMagic, c));
}

LoadedModel load_model(const std::filesystem::path& motion_path,
                       const std::filesystem::path& text_path) {
  MotionEncoder motion = load_motion_checkpoint(motion_path);
  TensorContainer c = decode_container(kTextMagic, io::read_file(text_path));
  check_version(c.config, "text checkpoint");
  const ModelConfig config = model_config_from_json(c.config.at("model"));
  if (to_json(config.motion) != to_json(motion.config()))
    throw FormatError("motion and text checkpoints come from different models");

  TextEncoder text(config.text, take_prefixed(c.tensors, "text."));
  ProjectionHead motion_head(motion.embedding_dim(), config.d_common,
                             config.l2_normalize,
                             take_prefixed(c.tensors, "motion_head."));
  ProjectionHead text_head(config.text.output_dim, config.d_common,
                           config.l2_normalize,
                           take_prefixed(c.tensors, "text_head."));
  const std::size_t expected = text.params().size() +
                               motion_head.params().size() +
                               text_head.params().size() + 1;
  if (c.tensors.size() != expected)
    throw FormatError("text checkpoint has unexpected tensors");
  const double log_tau = c.tensors.get("log_tau").value(0, 0);
  auto source =
      source_from_json(c.config.at("text_source"), config.text.variant);
  return {RetrievalModel(config, std::move(motion), std::move(text),
                         std::move(motion_head), std::move(text_head), log_tau),
          std::move(source)};
}

}  // namespace motret
