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

// motret: train, encode, index, search, evaluate and serve text-to-motion
// retrieval models.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "motret/checkpoint.hpp"
#include "motret/errors.hpp"
#include "motret/pipeline.hpp"
#include "motret/service.hpp"

namespace fs = std::filesystem;
using namespace motret;

namespace {

constexpr int kUsageError = 2;

/// A trained model directory holds motion.menc and text.tenc.
struct ModelPaths {
  fs::path dir;
  fs::path motion() const { return dir / "motion.menc"; }
  fs::path text() const { return dir / "text.tenc"; }
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

LoadedModel load_model_dir(const ModelPaths& paths) {
  for (const fs::path& p : {paths.motion(), paths.text()})
    if (!fs::exists(p)) throw UsageError("missing checkpoint " + p.string());
  return load_model(paths.motion(), paths.text());
}

/// The model's own caption source, or one rebuilt from embedding files.
TextInputSource text_source_for(const LoadedModel& loaded,
                                const fs::path& sentences,
                                const fs::path& tokens) {
  if (loaded.text_source) return *loaded.text_source;
  const TextVariant variant = loaded.model.config().text.variant;
  if (variant == TextVariant::kAffine && sentences.empty())
    throw UsageError("this model reads sentence embeddings; pass --sentences");
  if (variant == TextVariant::kLstmAggregator && tokens.empty())
    throw UsageError("this model reads token embeddings; pass --tokens");
  return TextInputSource::from_files(
      variant,
      sentences.empty() ? std::vector<SentenceEmbedding>{}
                        : load_sentence_embeddings(sentences),
      tokens.empty() ? std::vector<TokenEmbeddingSequence>{}
                     : load_token_embeddings(tokens));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

template <typename T>
std::vector<T> parse_list(const std::string& csv,
                          T (*parse)(std::string_view)) {
  std::vector<T> out;
  std::stringstream in(csv);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(parse(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-to-motion retrieval: training, indexing and search"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  int synth_pairs = 32;
  std::uint64_t synth_seed = 0;
  double synth_test = 0.0;
  fs::path synth_out = "synthetic";
  synth->add_option("--pairs", synth_pairs, "Number of text-motion pairs")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--test-fraction", synth_test,
                    "Fraction of motions in the test split")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--out", synth_out, "Output directory");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  fs::path train_config, train_manifest, train_out = "model";
  int train_steps = 0;
  bool quiet = false;
  train->add_option("--config", train_config, "Training config (JSON)")
      ->check(CLI::ExistingFile);
  train->add_option("--manifest", train_manifest, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Model directory to write");
  train->add_option("--steps", train_steps, "Override max_steps");
  train->add_flag("--quiet", quiet, "Do not print per-step losses");

  // encode-motions / encode-texts
  auto* enc_m = app.add_subcommand("encode-motions", "Embed dataset motions");
  auto* enc_t = app.add_subcommand("encode-texts", "Embed dataset captions");
  ModelPaths model{"model"};
  fs::path manifest_path, out_path, sentences, tokens;
  std::string split = "test";
  bool dedupe = false;
  for (auto* cmd : {enc_m, enc_t}) {
    cmd->add_option("--model", model.dir, "Model directory")
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--manifest", manifest_path, "Dataset manifest")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--split", split, "train, val or test");
    cmd->add_option("--out", out_path, "Output embedding file")->required();
  }
  for (auto* cmd : {enc_t}) {
    cmd->add_option("--sentences", sentences, "Sentence embedding file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--tokens", tokens, "Token embedding file")
        ->check(CLI::ExistingFile);
    cmd->add_flag("--dedupe", dedupe, "Drop captions with repeated text");
  }

  // index
  auto* index = app.add_subcommand("index", "Build an index snapshot");
  fs::path embeddings_path;
  index->add_option("--embeddings", embeddings_path, "Motion embedding file")
      ->required()
      ->check(CLI::ExistingFile);
  index->add_option("--out", out_path, "Snapshot file")->required();

  // search
  auto* search = app.add_subcommand("search", "Query an index with free text");
  fs::path index_path;
  std::string query_text;
  int k = 10;
  std::string search_model;
  search->add_option("--index", index_path, "Index snapshot")
      ->required()
      ->check(CLI::ExistingFile);
  search->add_option("--text", query_text, "Query text")->required();
  search->add_option("--k", k, "Number of results")->check(CLI::PositiveNumber);
  search->add_option("--model", search_model,
                     "Model directory (defaults to the index's directory)")
      ->check(CLI::ExistingDirectory);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate on a split");
  std::vector<fs::path> relevance_files;
  fs::path report_path;
  evaluate->add_option("--model", model.dir, "Model directory")
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--manifest", manifest_path, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--split", split, "train, val or test");
  evaluate->add_option("--relevance", relevance_files,
                       "External relevance matrices (RELV + .json sidecar)")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--sentences", sentences, "Sentence embedding file")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--tokens", tokens, "Token embedding file")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", report_path, "Report JSON to write");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate a config grid");
  std::string dims = "8,16,64,256", losses = "infonce", encoders = "mot";
  std::string eval_split;
  fs::path sweep_out = "sweep";
  sweep->add_option("--config", train_config, "Base training config (JSON)")
      ->check(CLI::ExistingFile);
  sweep->add_option("--manifest", manifest_path, "Dataset manifest")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--dims", dims, "Comma-separated d_common values");
  sweep->add_option("--losses", losses, "Comma-separated losses");
  sweep->add_option("--encoders", encoders, "Comma-separated motion encoders");
  sweep->add_option("--eval-split", eval_split,
                    "Split to report on (defaults to the training split)");
  sweep->add_option("--steps", train_steps, "Override max_steps");
  sweep->add_option("--out", sweep_out, "Output directory");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP query service");
  fs::path service_config;
  int port = 0;
  serve_cmd->add_option("--config", service_config,
                        "Service config (JSON); defaults to $MOTRET_CONFIG")
      ->check(CLI::ExistingFile);
  serve_cmd->add_option("--port", port, "Override the configured port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*synth) {
      SyntheticOptions opts;
      opts.test_fraction = synth_test;
      const SyntheticDataset data =
          generate_synthetic(synth_pairs, synth_seed, opts);
      write_dataset(data, synth_out);
      std::cout << "wrote " << data.motions.size() << " pairs to "
                << synth_out.string() << "\n";
    } else if (*train) {
      TrainConfig config =
          train_config.empty() ? TrainConfig{} : load_train_config(train_config);
      if (train_steps > 0) config.max_steps = train_steps;
      const DatasetManifest manifest = load_manifest(train_manifest);
      const MotionSet data = load_motion_set(manifest, config.split);
      const TextInputSource text = make_text_source(config, data);
      const TrainResult result = train_model(
          config, data, text, [quiet](std::uint64_t step, double loss) {
            if (!quiet) std::cout << "step " << step << " loss " << loss << "\n";
          });
      fs::create_directories(train_out);
      const ModelPaths out{train_out};
      save_model(result.state.model, text, out.motion(), out.text());
      std::ostringstream log;
      log << "step\tloss\n";
      for (std::size_t i = 0; i < result.log.step_losses.size(); ++i)
        log << i + 1 << '\t' << result.log.step_losses[i] << '\n';
      write_text(train_out / "train_log.tsv", log.str());
      write_text(train_out / "train_config.json", to_json(config).dump(2) + "\n");
      std::cout << "initial loss " << result.log.initial_loss << ", final loss "
                << result.log.final_loss << "; model written to "
                << train_out.string() << "\n";
    } else if (*enc_m || *enc_t) {
      const LoadedModel loaded = load_model_dir(model);
      const DatasetManifest manifest = load_manifest(manifest_path);
      const Split s = parse_split(split);
      EmbeddingTable table;
      if (*enc_m) {
        table = encode_motion_set(loaded.model, load_motion_set(manifest, s));
      } else {
        std::vector<CaptionRecord> captions = manifest.captions_in(s);
        if (dedupe) captions = dedupe_queries(captions);
        table = encode_captions(loaded.model,
                                text_source_for(loaded, sentences, tokens),
                                captions);
      }
      table.save(out_path);
      std::cout << "wrote " << table.ids.size() << " embeddings to "
                << out_path.string() << "\n";
    } else if (*index) {
      const EmbeddingStore store =
          build_store(EmbeddingTable::load(embeddings_path));
      store.save(out_path);
      std::cout << "indexed " << store.size() << " vectors (d=" << store.dim()
                << ")\n";
    } else if (*search) {
      const ModelPaths paths{search_model.empty()
                                 ? fs::absolute(index_path).parent_path()
                                 : fs::path(search_model)};
      const LoadedModel loaded = load_model_dir(paths);
      if (!loaded.text_source)
        throw UsageError("model cannot embed free text");
      const EmbeddingStore store = EmbeddingStore::load(index_path);
      const RowVector q =
          encode_query(loaded.model, *loaded.text_source, query_text);
      const RankedList ranked = knn_query(
          store, std::span(q.data(), static_cast<std::size_t>(q.size())), k);
      for (std::size_t i = 0; i < ranked.hits.size(); ++i)
        std::printf("%zu %s %.6f\n", i + 1, ranked.hits[i].motion_id.c_str(),
                    ranked.hits[i].score);
    } else if (*evaluate) {
      const LoadedModel loaded = load_model_dir(model);
      const DatasetManifest manifest = load_manifest(manifest_path);
      const MotionSet data = load_motion_set(manifest, parse_split(split));
      std::vector<RelevanceMatrix> external;
      for (const fs::path& p : relevance_files) external.push_back(load_relevance(p));
      const MetricsReport report = evaluate_model(
          loaded.model, text_source_for(loaded, sentences, tokens), data,
          external);
      if (!report_path.empty())
        write_text(report_path, to_json(report).dump(2) + "\n");
      const std::pair<std::string, MetricsReport> row{model.dir.filename().string(),
                                                      report};
      std::cout << format_table(std::span(&row, 1));
    } else if (*sweep) {
      SweepConfig config;
      config.base =
          train_config.empty() ? TrainConfig{} : load_train_config(train_config);
      if (train_steps > 0) config.base.max_steps = train_steps;
      config.d_common.clear();
      std::stringstream in(dims);
      for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) config.d_common.push_back(std::stoi(item));
      config.losses = parse_list<LossKind>(losses, parse_loss);
      config.encoders = parse_list<MotionVariant>(encoders, parse_motion_variant);
      const DatasetManifest manifest = load_manifest(manifest_path);
      const MotionSet train_set = load_motion_set(manifest, config.base.split);
      const MotionSet eval_set =
          eval_split.empty() ? train_set
                             : load_motion_set(manifest, parse_split(eval_split));
      const auto cells = run_sweep(config, train_set, eval_set, sweep_out);
      std::cout << "wrote " << cells.size() << " reports to "
                << sweep_out.string() << "\n";
      std::ifstream table(sweep_out / "sweep.txt");
      std::cout << table.rdbuf();
    } else if (*serve_cmd) {
      fs::path path = service_config;
      if (path.empty()) {
        const char* env = std::getenv("MOTRET_CONFIG");
        if (env == nullptr || *env == '\0')
          throw UsageError("pass --config or set MOTRET_CONFIG");
        path = env;
        if (!fs::exists(path)) throw UsageError("missing file " + path.string());
      }
      ServiceConfig config = load_service_config(path);
      if (port > 0) config.port = port;
      serve(config);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
