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

#include "motret/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "motret/checkpoint.hpp"
#include "motret/errors.hpp"

namespace motret {

using nlohmann::json;

namespace {

std::string_view source_kind_name(TextSourceConfig::Kind k) {
  switch (k) {
    case TextSourceConfig::Kind::kHashed: return "hashed";
    case TextSourceConfig::Kind::kFiles: return "files";
    case TextSourceConfig::Kind::kVocabulary: return "vocabulary";
  }
  return "hashed";
}

json source_to_json(const TextSourceConfig& s) {
  json j{{"kind", source_kind_name(s.kind)}};
  switch (s.kind) {
    case TextSourceConfig::Kind::kHashed:
      j["sentence_dim"] = s.featurizer.sentence_dim;
      j["token_dim"] = s.featurizer.token_dim;
      j["max_ngram"] = s.featurizer.max_ngram;
      j["seed"] = s.featurizer.seed;
      break;
    case TextSourceConfig::Kind::kFiles:
      if (!s.sentence_file.empty()) j["sentences"] = s.sentence_file.string();
      if (!s.token_file.empty()) j["tokens"] = s.token_file.string();
      break;
    case TextSourceConfig::Kind::kVocabulary: break;
  }
  return j;
}

TextSourceConfig source_from_json(const json& j) {
  TextSourceConfig s;
  const std::string kind = j.value("kind", "hashed");
  if (kind == "hashed") {
    s.kind = TextSourceConfig::Kind::kHashed;
    s.featurizer.sentence_dim = j.value("sentence_dim", s.featurizer.sentence_dim);
    s.featurizer.token_dim = j.value("token_dim", s.featurizer.token_dim);
    s.featurizer.max_ngram = j.value("max_ngram", s.featurizer.max_ngram);
    s.featurizer.seed = j.value("seed", s.featurizer.seed);
  } else if (kind == "files") {
    s.kind = TextSourceConfig::Kind::kFiles;
    s.sentence_file = j.value("sentences", std::string{});
    s.token_file = j.value("tokens", std::string{});
  } else if (kind == "vocabulary") {
    s.kind = TextSourceConfig::Kind::kVocabulary;
  } else {
    throw InvalidArgument("unknown text_source kind '" + kind + "'");
  }
  return s;
}

}  // namespace

json to_json(const TrainConfig& c) {
  json motion = to_json(c.model.motion);
  motion.erase("variant");
  motion.erase("max_len");
  motion.erase("feature_mean");
  motion.erase("feature_scale");
  json text = to_json(c.model.text);
  text.erase("variant");
  text.erase("input_dim");
  return {{"motion_encoder", motion_variant_name(c.model.motion.variant)},
          {"text_encoder", text_variant_name(c.model.text.variant)},
          {"loss", loss_name(c.model.loss)},
          {"d_common", c.model.d_common},
          {"margin", c.model.margin},
          {"tau_init", c.model.tau_init},
          {"l2_normalize", c.model.l2_normalize},
          {"lr", c.adam.learning_rate},
          {"batch", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"max_len", c.model.motion.max_len},
          {"split", split_name(c.split)},
          {"standardize_features", c.standardize_features},
          {"motion", motion},
          {"text", text},
          {"text_source", source_to_json(c.text_source)}};
}

TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> known{
      "motion_encoder", "text_encoder", "loss",   "d_common", "margin",
      "tau_init",       "l2_normalize", "lr",     "batch",    "epochs",
      "max_steps",      "seed",         "max_len", "split",   "motion",
      "text",           "text_source",  "standardize_features"};
  if (!j.is_object()) throw InvalidArgument("training config must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key))
      throw InvalidArgument("unknown training config key '" + key + "'");

  TrainConfig c;
  try {
    if (j.contains("motion")) {
      json m = j.at("motion");
      m.erase("variant");
      m.erase("max_len");
      c.model.motion = motion_config_from_json(m);
    }
    if (j.contains("text")) {
      json t = j.at("text");
      t.erase("variant");
      t.erase("input_dim");
      c.model.text = text_config_from_json(t);
    }
    if (j.contains("motion_encoder"))
      c.model.motion.variant =
          parse_motion_variant(j.at("motion_encoder").get<std::string>());
    if (j.contains("text_encoder"))
      c.model.text.variant =
          parse_text_variant(j.at("text_encoder").get<std::string>());
    if (j.contains("loss"))
      c.model.loss = parse_loss(j.at("loss").get<std::string>());
    c.model.d_common = j.value("d_common", c.model.d_common);
    c.model.margin = j.value("margin", c.model.margin);
    c.model.tau_init = j.value("tau_init", c.model.tau_init);
    c.model.l2_normalize = j.value("l2_normalize", c.model.l2_normalize);
    c.model.motion.max_len = j.value("max_len", c.model.motion.max_len);
    c.adam.learning_rate = j.value("lr", c.adam.learning_rate);
    c.batch_size = j.value("batch", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("split")) c.split = parse_split(j.at("split").get<std::string>());
    if (j.contains("text_source"))
      c.text_source = source_from_json(j.at("text_source"));
    c.standardize_features =
        j.value("standardize_features", c.standardize_features);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad training config: ") + e.what());
  }
  c.model.motion.validate();
  if (c.model.d_common < 2) throw InvalidArgument("d_common must be >= 2");
  if (!(c.model.tau_init > 0.0)) throw InvalidArgument("tau_init must be > 0");
  if (!(c.model.margin >= 0.0)) throw InvalidArgument("margin must be >= 0");
  if (!(c.adam.learning_rate >= 0.0)) throw InvalidArgument("lr must be >= 0");
  if (c.batch_size < 1) throw InvalidArgument("batch must be >= 1");
  if (c.epochs < 1 && c.max_steps < 1)
    throw InvalidArgument("epochs or max_steps must be positive");
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open training config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("cannot parse " + path.string() + ": " + e.what());
  }
  TrainConfig c = train_config_from_json(j);
  const auto base = path.parent_path();
  for (auto* p : {&c.text_source.sentence_file, &c.text_source.token_file})
    if (!p->empty() && p->is_relative()) *p = base / *p;
  return c;
}

std::vector<CaptionRecord> MotionSet::all_captions() const {
  std::vector<CaptionRecord> out;
  for (const auto& list : captions) out.insert(out.end(), list.begin(), list.end());
  return out;
}

MotionSet load_motion_set(const DatasetManifest& manifest, Split split) {
  MotionSet set;
  for (const ManifestEntry* e : manifest.entries_in(split)) {
    const SkeletonSequence seq =
        load_motion(manifest.motion_path(*e), manifest.topology, e->motion_id);
    set.ids.push_back(e->motion_id);
    set.parts.push_back(aggregate_body_parts(seq, manifest.topology));
    set.captions.push_back(e->captions);
  }
  return set;
}

MotionSet motion_set_of(const SyntheticDataset& data, Split split) {
  MotionSet set;
  for (std::size_t i = 0; i < data.manifest.entries.size(); ++i) {
    const ManifestEntry& e = data.manifest.entries[i];
    if (e.split != split) continue;
    set.ids.push_back(e.motion_id);
    set.parts.push_back(
        aggregate_body_parts(data.motions[i], data.manifest.topology));
    set.captions.push_back(e.captions);
  }
  return set;
}

TextInputSource make_text_source(const TrainConfig& config,
                                 const MotionSet& data) {
  const TextVariant variant = config.model.text.variant;
  switch (config.text_source.kind) {
    case TextSourceConfig::Kind::kHashed:
      return TextInputSource::hashed(variant, config.text_source.featurizer);
    case TextSourceConfig::Kind::kFiles: {
      std::vector<SentenceEmbedding> sentences;
      std::vector<TokenEmbeddingSequence> tokens;
      if (variant == TextVariant::kAffine) {
        if (config.text_source.sentence_file.empty())
          throw InvalidArgument("affine text encoder needs a sentence file");
        sentences = load_sentence_embeddings(config.text_source.sentence_file);
      } else {
        if (config.text_source.token_file.empty())
          throw InvalidArgument("recurrent aggregator needs a token file");
        tokens = load_token_embeddings(config.text_source.token_file);
      }
      return TextInputSource::from_files(variant, std::move(sentences),
                                         std::move(tokens));
    }
    case TextSourceConfig::Kind::kVocabulary: {
      std::vector<std::string> texts;
      for (const auto& c : data.all_captions()) texts.push_back(c.text);
      return TextInputSource::vocabulary(Vocabulary::build(texts));
    }
  }
  throw InvalidArgument("unknown text source");
}

namespace {

PaddedBatch pad_items(const MotionSet& data, std::span<const std::size_t> items,
                      int max_len) {
  std::vector<Matrix> seqs;
  int longest = 1;
  for (std::size_t i : items) {
    seqs.push_back(data.parts[i]);
    longest = std::max(longest, static_cast<int>(data.parts[i].rows()));
  }
  return pad_and_mask(seqs, std::min(longest, max_len));
}

}  // namespace

TrainResult train_model(const TrainConfig& config, const MotionSet& data,
                        const TextInputSource& text,
                        const StepCallback& on_step) {
  if (data.ids.empty()) throw InvalidArgument("no training motions");
  if (text.variant() != config.model.text.variant)
    throw InvalidArgument("text source does not match the text encoder");
  const LossKind loss = config.model.loss;
  const std::size_t min_batch = loss == LossKind::kTriplet ? 2 : 1;
  if (data.ids.size() < min_batch)
    throw InvalidArgument("triplet training needs at least two motions");
  for (std::size_t i = 0; i < data.ids.size(); ++i)
    if (data.captions[i].empty())
      throw InvalidArgument("motion '" + data.ids[i] + "' has no captions");

  ModelConfig model_config = config.model;
  model_config.text.input_dim = text.input_dim();
  if (config.standardize_features)
    fit_feature_standardization(model_config.motion, data.parts);
  TrainResult result{TrainState(RetrievalModel(model_config, config.seed),
                                config.adam, config.seed),
                     {}};
  TrainState& state = result.state;

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(data.ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const int epochs = config.max_steps > 0 ? std::numeric_limits<int>::max()
                                          : config.epochs;
  std::optional<TrainBatch> first;
  bool done = false;
  for (int epoch = 0; epoch < epochs && !done; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && !done; start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      if (end - start < min_batch) continue;
      const std::span<const std::size_t> items(order.data() + start, end - start);
      std::vector<CaptionRecord> captions;
      for (std::size_t i : items) {
        std::uniform_int_distribution<std::size_t> pick(
            0, data.captions[i].size() - 1);
        captions.push_back(data.captions[i][pick(rng)]);
      }
      TrainBatch b{pad_items(data, items, model_config.motion.max_len),
                   text.batch(captions)};
      const double value = train_step_inplace(state, b, loss);
      result.log.step_losses.push_back(value);
      if (on_step) on_step(state.step, value);
      if (!first) first = std::move(b);
      if (config.max_steps > 0 &&
          state.step >= static_cast<std::uint64_t>(config.max_steps))
        done = true;
    }
  }
  if (!first) throw InvalidArgument("training produced no batches");
  result.log.initial_loss = result.log.step_losses.front();
  result.log.final_loss = evaluate_loss(state.model, *first, loss);
  return result;
}

EmbeddingTable encode_motion_set(const RetrievalModel& model,
                                 const MotionSet& data, int batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  EmbeddingTable table{data.ids,
                       Matrix(static_cast<Eigen::Index>(data.ids.size()),
                              model.config().d_common)};
  std::vector<std::size_t> items;
  for (std::size_t start = 0; start < data.ids.size(); start += batch_size) {
    items.clear();
    for (std::size_t i = start;
         i < std::min(data.ids.size(), start + batch_size); ++i)
      items.push_back(i);
    const Matrix emb = model.embed_motions(
        pad_items(data, items, model.config().motion.max_len));
    table.vectors.middleRows(static_cast<Eigen::Index>(start), emb.rows()) = emb;
  }
  return table;
}

EmbeddingTable encode_captions(const RetrievalModel& model,
                               const TextInputSource& text,
                               std::span<const CaptionRecord> captions,
                               int batch_size) {
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  EmbeddingTable table;
  table.vectors.resize(static_cast<Eigen::Index>(captions.size()),
                       model.config().d_common);
  for (const CaptionRecord& c : captions) table.ids.push_back(c.caption_id);
  for (std::size_t start = 0; start < captions.size(); start += batch_size) {
    const auto chunk = captions.subspan(
        start, std::min<std::size_t>(batch_size, captions.size() - start));
    const Matrix emb = model.embed_texts(text.batch(chunk));
    table.vectors.middleRows(static_cast<Eigen::Index>(start), emb.rows()) = emb;
  }
  return table;
}

RowVector encode_query(const RetrievalModel& model,
                       const TextInputSource& text, std::string_view query) {
  return model.embed_texts(text.free_text(query)).row(0);
}

MetricsReport evaluate_model(const RetrievalModel& model,
                             const TextInputSource& text, const MotionSet& data,
                             std::span<const RelevanceMatrix> external) {
  const std::vector<CaptionRecord> all = data.all_captions();
  const std::vector<CaptionRecord> queries = dedupe_queries(all);
  const EmbeddingTable query_emb = encode_captions(model, text, queries);
  const EmbeddingStore store = build_store(encode_motion_set(model, data));
  std::vector<RelevanceMatrix> relevance{
      lexical_relevance_matrix(queries, data.ids, data.captions)};
  relevance.insert(relevance.end(), external.begin(), external.end());
  return evaluate_protocol(query_emb.vectors, query_emb.ids, store,
                           ground_truth_of(queries, all), relevance);
}

std::vector<SweepCell> run_sweep(
    const SweepConfig& config, const MotionSet& train, const MotionSet& eval,
    const std::optional<std::filesystem::path>& out_dir) {
  std::vector<SweepCell> cells;
  for (MotionVariant encoder : config.encoders)
    for (LossKind loss : config.losses)
      for (int d : config.d_common) {
        TrainConfig c = config.base;
        c.model.motion.variant = encoder;
        c.model.loss = loss;
        c.model.d_common = d;
        const TextInputSource text = make_text_source(c, train);
        const TrainResult trained = train_model(c, train, text);
        cells.push_back({encoder, loss, d,
                         evaluate_model(trained.state.model, text, eval)});
      }
  if (!out_dir) return cells;

  std::filesystem::create_directories(*out_dir);
  std::ostringstream tsv;
  tsv << "encoder\tloss\td_common";
  if (!cells.empty()) {
    for (const auto& [k, _] : cells.front().report.recall) tsv << "\tr" << k;
    tsv << "\tmean_rank\tmedian_rank";
    for (const NdcgSummary& n : cells.front().report.ndcg)
      tsv << "\tndcg10_" << n.source << "\tndcg_" << n.source;
  }
  tsv << '\n';
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const SweepCell& cell : cells) {
    const std::string label = std::string(motion_variant_name(cell.encoder)) +
                              "_" + std::string(loss_name(cell.loss)) + "_d" +
                              std::to_string(cell.d_common);
    std::ofstream(*out_dir / (label + ".json")) << to_json(cell.report).dump(2)
                                                << '\n';
    tsv << motion_variant_name(cell.encoder) << '\t' << loss_name(cell.loss)
        << '\t' << cell.d_common;
    for (const auto& [_, v] : cell.report.recall) tsv << '\t' << v;
    tsv << '\t' << cell.report.mean_rank << '\t' << cell.report.median_rank;
    for (const NdcgSummary& n : cell.report.ndcg)
      tsv << '\t' << n.at_10 << '\t' << n.full;
    tsv << '\n';
    rows.emplace_back(label, cell.report);
  }
  std::ofstream(*out_dir / "sweep.tsv") << tsv.str();
  std::ofstream(*out_dir / "sweep.txt") << format_table(rows);
  return cells;
}

}  // namespace motret
