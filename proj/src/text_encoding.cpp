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

#include "motret/text_encoding.hpp"

#include <cctype>
#include <cmath>
#include <random>

#include "motret/binary_io.hpp"
#include "motret/errors.hpp"
#include "motret/nn.hpp"

namespace motret {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  if (tokens.empty()) throw InvalidArgument("empty caption");
  return tokens;
}

std::string normalized_text(std::string_view text) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

Vocabulary::Vocabulary() {
  tokens_.emplace_back(kUnknownToken);
  index_.emplace(kUnknownToken, kUnknown);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  Vocabulary v;
  for (const auto& text : texts)
    for (auto& tok : tokenize(text))
      if (!v.index_.contains(tok)) {
        v.index_.emplace(tok, v.size());
        v.tokens_.push_back(std::move(tok));
      }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens[0] != kUnknownToken)
    throw FormatError("vocabulary must start with <unk>");
  Vocabulary v;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (v.index_.contains(tokens[i]))
      throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
    v.index_.emplace(tokens[i], v.size());
    v.tokens_.push_back(tokens[i]);
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ (seed * 0x9e3779b97f4a7c15ull);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

RowVector HashedFeaturizer::sentence(std::string_view text) const {
  const auto toks = tokenize(text);
  RowVector v = RowVector::Zero(sentence_dim);
  for (int n = 1; n <= max_ngram; ++n) {
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      std::string gram = toks[i];
      for (int k = 1; k < n; ++k) gram += " " + toks[i + k];
      const std::uint64_t h = splitmix(fnv1a(gram, seed));
      const auto slot = static_cast<Eigen::Index>(h % sentence_dim);
      v[slot] += ((h >> 63) != 0u) ? -1.0 : 1.0;
    }
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v.unaryExpr(&round_f32);
}

Matrix HashedFeaturizer::tokens(std::string_view text) const {
  const auto toks = tokenize(text);
  Matrix m(static_cast<Eigen::Index>(toks.size()), token_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::mt19937_64 rng(splitmix(fnv1a(toks[i], seed + 1)));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int d = 0; d < token_dim; ++d)
      m(static_cast<Eigen::Index>(i), d) = round_f32(dist(rng) * scale);
  }
  return m;
}

void save_token_embeddings(std::span<const TokenEmbeddingSequence> records,
                           const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("TOKE");
  w.u32(static_cast<std::uint32_t>(records.size()));
  std::vector<float> buf;
  for (const auto& r : records) {
    if (r.vectors.rows() < 1)
      throw InvalidArgument("token sequence '" + r.caption_id + "' is empty");
    w.short_string(r.caption_id);
    w.u32(static_cast<std::uint32_t>(r.vectors.rows()));
    w.u32(static_cast<std::uint32_t>(r.vectors.cols()));
    buf.resize(static_cast<std::size_t>(r.vectors.size()));
    for (Eigen::Index i = 0; i < r.vectors.size(); ++i)
      buf[i] = static_cast<float>(r.vectors.data()[i]);
    w.f32s(buf);
  }
  w.write_file(path);
}

std::vector<TokenEmbeddingSequence> load_token_embeddings(
    const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic("TOKE");
  const std::uint32_t count = r.u32("count");
  std::vector<TokenEmbeddingSequence> out;
  std::vector<float> buf;
  for (std::uint32_t i = 0; i < count; ++i) {
    TokenEmbeddingSequence rec;
    rec.caption_id = r.short_string("caption_id");
    const std::uint32_t len = r.u32("L");
    const std::uint32_t dim = r.u32("d_tok");
    if (len < 1) throw FormatError("L must be >= 1 for '" + rec.caption_id + "'");
    if (!out.empty() && out.front().vectors.cols() != dim)
      throw FormatError("d_tok differs between records");
    buf.resize(static_cast<std::size_t>(len) * dim);
    r.f32s(buf, "token vectors");
    rec.vectors.resize(len, dim);
    for (std::size_t k = 0; k < buf.size(); ++k) {
      if (!std::isfinite(buf[k]))
        throw FormatError("non-finite token embedding in '" +
                          rec.caption_id + "'");
      rec.vectors.data()[k] = buf[k];
    }
    out.push_back(std::move(rec));
  }
  r.expect_end("TOKE");
  return out;
}

void save_sentence_embeddings(std::span<const SentenceEmbedding> records,
                              const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("SENT");
  w.u32(static_cast<std::uint32_t>(records.size()));
  const auto dim = records.empty() ? 0 : records[0].vector.size();
  w.u32(static_cast<std::uint32_t>(dim));
  std::vector<float> buf(static_cast<std::size_t>(dim));
  for (const auto& r : records) {
    if (r.vector.size() != dim)
      throw InvalidArgument("d_sent differs between records");
    w.short_string(r.caption_id);
    for (Eigen::Index i = 0; i < dim; ++i)
      buf[i] = static_cast<float>(r.vector[i]);
    w.f32s(buf);
  }
  w.write_file(path);
}

std::vector<SentenceEmbedding> load_sentence_embeddings(
    const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic("SENT");
  const std::uint32_t count = r.u32("count");
  const std::uint32_t dim = r.u32("d_sent");
  std::vector<SentenceEmbedding> out;
  std::vector<float> buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    SentenceEmbedding rec;
    rec.caption_id = r.short_string("caption_id");
    r.f32s(buf, "sentence vector");
    rec.vector.resize(dim);
    for (std::uint32_t k = 0; k < dim; ++k) {
      if (!std::isfinite(buf[k]))
        throw FormatError("non-finite sentence embedding in '" +
                          rec.caption_id + "'");
      rec.vector[k] = buf[k];
    }
    out.push_back(std::move(rec));
  }
  r.expect_end("SENT");
  return out;
}

std::string_view text_variant_name(TextVariant v) {
  switch (v) {
    case TextVariant::kLstmAggregator: return "lstm-aggregator";
    case TextVariant::kAffine: return "affine";
    case TextVariant::kSelfContained: return "self-contained";
  }
  return "affine";
}

TextVariant parse_text_variant(std::string_view name) {
  if (name == "lstm-aggregator") return TextVariant::kLstmAggregator;
  if (name == "affine") return TextVariant::kAffine;
  if (name == "self-contained") return TextVariant::kSelfContained;
  throw InvalidArgument("unknown text variant '" + std::string(name) + "'");
}

int TextBatch::size(TextVariant variant) const {
  switch (variant) {
    case TextVariant::kAffine: return static_cast<int>(sentences.rows());
    case TextVariant::kLstmAggregator: return static_cast<int>(tokens.size());
    case TextVariant::kSelfContained:
      return static_cast<int>(token_ids.size());
  }
  return 0;
}

TextEncoder::TextEncoder(const TextEncoderConfig& config, std::uint64_t seed)
    : config_(config) {
  if (config.input_dim < 1 || config.output_dim < 1)
    throw ShapeError("text encoder dimensions must be positive");
  nn::Rng rng(seed);
  switch (config.variant) {
    case TextVariant::kAffine:
      nn::init_linear(params_, "affine", config.input_dim, config.output_dim,
                      rng);
      break;
    case TextVariant::kLstmAggregator:
      if (config.layers < 1) throw ShapeError("aggregator needs >= 1 layer");
      for (int l = 0; l < config.layers; ++l)
        nn::init_lstm(params_, "lstm" + std::to_string(l),
                      l == 0 ? config.input_dim : config.output_dim,
                      config.output_dim, rng);
      break;
    case TextVariant::kSelfContained: {
      std::normal_distribution<double> dist(0.0, 0.1);
      Matrix table(config.input_dim, config.embed_dim);
      for (Eigen::Index i = 0; i < table.size(); ++i)
        table.data()[i] = dist(rng);
      params_.add("embedding", std::move(table));
      nn::init_gru(params_, "gru", config.embed_dim, config.output_dim, rng);
      break;
    }
  }
}

TextEncoder::TextEncoder(const TextEncoderConfig& config, ParameterSet params)
    : config_(config), params_(std::move(params)) {
  TextEncoder reference(config, 0);
  if (reference.params_.size() != params_.size())
    throw ShapeError("text encoder checkpoint has " +
                     std::to_string(params_.size()) + " tensors, expected " +
                     std::to_string(reference.params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& want = reference.params_[i];
    const Parameter& got = params_.get(want.name);
    if (got.value.rows() != want.value.rows() ||
        got.value.cols() != want.value.cols())
      throw ShapeError("text encoder tensor '" + want.name +
                       "' has the wrong shape");
  }
}

ag::Var TextEncoder::forward_sequences(
    ag::Tape& tape, const std::vector<Matrix>& items, int width,
    bool from_ids, const std::vector<std::vector<int>>& ids) {
  const int batch = static_cast<int>(from_ids ? ids.size() : items.size());
  if (batch < 1) throw ShapeError("empty text batch");
  int steps = 0;
  for (int b = 0; b < batch; ++b) {
    const int len = static_cast<int>(from_ids ? ids[b].size()
                                               : items[b].rows());
    if (len < 1) throw ShapeError("text item " + std::to_string(b) +
                                  " has no tokens");
    if (!from_ids && items[b].cols() != width)
      throw ShapeError("token width " + std::to_string(items[b].cols()) +
                       " does not match encoder input " +
                       std::to_string(width));
    steps = std::max(steps, len);
  }

  nn::Sequence seq;
  seq.steps = steps;
  seq.batch = batch;
  seq.valid.assign(static_cast<std::size_t>(steps) * batch, 0);
  if (from_ids) {
    std::vector<int> rows(seq.valid.size(), Vocabulary::kUnknown);
    for (int b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < ids[b].size(); ++t) {
        const int id = ids[b][t];
        if (id < 0 || id >= config_.input_dim)
          throw ShapeError("token id " + std::to_string(id) +
                           " outside vocabulary");
        rows[t * batch + b] = id;
        seq.valid[t * batch + b] = 1;
      }
    seq.inputs = ag::gather_rows(tape.param(params_.get("embedding")),
                                 std::move(rows));
    return nn::gru(tape, params_, "gru", seq).final_hidden;
  }

  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(steps) * batch, width);
  for (int b = 0; b < batch; ++b)
    for (Eigen::Index t = 0; t < items[b].rows(); ++t) {
      x.row(t * batch + b) = items[b].row(t);
      seq.valid[t * batch + b] = 1;
    }
  seq.inputs = tape.constant(std::move(x));
  nn::RecurrentResult r = nn::lstm(tape, params_, "lstm0", seq);
  for (int l = 1; l < config_.layers; ++l) {
    nn::Sequence next = nn::restack(r, seq);
    r = nn::lstm(tape, params_, "lstm" + std::to_string(l), next);
  }
  return r.final_hidden;
}

ag::Var TextEncoder::forward(ag::Tape& tape, const TextBatch& batch) {
  switch (config_.variant) {
    case TextVariant::kAffine:
      if (batch.sentences.cols() != config_.input_dim)
        throw ShapeError("sentence width " +
                         std::to_string(batch.sentences.cols()) +
                         " does not match encoder input " +
                         std::to_string(config_.input_dim));
      if (batch.sentences.rows() < 1) throw ShapeError("empty text batch");
      return nn::linear(tape, params_, "affine",
                        tape.constant(batch.sentences));
    case TextVariant::kLstmAggregator:
      return forward_sequences(tape, batch.tokens, config_.input_dim, false,
                               batch.token_ids);
    case TextVariant::kSelfContained:
      return forward_sequences(tape, batch.tokens, config_.embed_dim, true,
                               batch.token_ids);
  }
  throw ShapeError("unknown text variant");
}

Matrix TextEncoder::encode(const TextBatch& batch) const {
  ag::Tape tape;
  // The tape only reads parameter values; no gradient is taken.
  auto& self = const_cast<TextEncoder&>(*this);
  return self.forward(tape, batch).value();
}

RowVector TextEncoder::encode_lstm_aggregator(
    const TokenEmbeddingSequence& tokens) const {
  if (config_.variant != TextVariant::kLstmAggregator)
    throw InvalidArgument("encoder is not an lstm-aggregator");
  TextBatch b;
  b.tokens.push_back(tokens.vectors);
  return encode(b).row(0);
}

RowVector TextEncoder::encode_affine(const SentenceEmbedding& sentence) const {
  if (config_.variant != TextVariant::kAffine)
    throw InvalidArgument("encoder is not affine");
  TextBatch b;
  b.sentences = sentence.vector;
  return encode(b).row(0);
}

RowVector TextEncoder::encode_self_contained(std::string_view text,
                                             const Vocabulary& vocab) const {
  if (config_.variant != TextVariant::kSelfContained)
    throw InvalidArgument("encoder is not self-contained");
  TextBatch b;
  b.token_ids.push_back(vocab.encode(text));
  return encode(b).row(0);
}

TextInputSource TextInputSource::hashed(TextVariant variant,
                                        HashedFeaturizer f) {
  if (variant == TextVariant::kSelfContained)
    throw InvalidArgument("self-contained encoder reads a vocabulary");
  TextInputSource s(Kind::kHashed, variant);
  s.featurizer_ = f;
  return s;
}

TextInputSource TextInputSource::from_files(
    TextVariant variant, std::vector<SentenceEmbedding> sentences,
    std::vector<TokenEmbeddingSequence> tokens) {
  if (variant == TextVariant::kSelfContained)
    throw InvalidArgument("self-contained encoder reads a vocabulary");
  TextInputSource s(Kind::kFiles, variant);
  for (auto& r : sentences) {
    s.file_dim_ = static_cast<int>(r.vector.size());
    s.sentences_.emplace(r.caption_id, std::move(r.vector));
  }
  if (variant == TextVariant::kLstmAggregator) s.file_dim_ = 0;
  for (auto& r : tokens) {
    if (variant == TextVariant::kLstmAggregator)
      s.file_dim_ = static_cast<int>(r.vectors.cols());
    s.tokens_.emplace(r.caption_id, std::move(r.vectors));
  }
  return s;
}

TextInputSource TextInputSource::vocabulary(Vocabulary vocab) {
  TextInputSource s(Kind::kVocabulary, TextVariant::kSelfContained);
  s.vocab_ = std::move(vocab);
  return s;
}

int TextInputSource::input_dim() const {
  switch (kind_) {
    case Kind::kHashed:
      return variant_ == TextVariant::kAffine ? featurizer_.sentence_dim
                                              : featurizer_.token_dim;
    case Kind::kFiles: return file_dim_;
    case Kind::kVocabulary: return vocab_.size();
  }
  return 0;
}

bool TextInputSource::supports_free_text() const {
  return kind_ != Kind::kFiles;
}

TextBatch TextInputSource::batch(
    std::span<const CaptionRecord> captions) const {
  TextBatch b;
  if (variant_ == TextVariant::kAffine)
    b.sentences.resize(static_cast<Eigen::Index>(captions.size()),
                       input_dim());
  for (std::size_t i = 0; i < captions.size(); ++i) {
    const CaptionRecord& c = captions[i];
    switch (kind_) {
      case Kind::kHashed:
        if (variant_ == TextVariant::kAffine)
          b.sentences.row(static_cast<Eigen::Index>(i)) =
              featurizer_.sentence(c.text);
        else
          b.tokens.push_back(featurizer_.tokens(c.text));
        break;
      case Kind::kFiles:
        if (variant_ == TextVariant::kAffine) {
          auto it = sentences_.find(c.caption_id);
          if (it == sentences_.end())
            throw InvalidArgument("no sentence embedding for caption '" +
                                  c.caption_id + "'");
          b.sentences.row(static_cast<Eigen::Index>(i)) = it->second;
        } else {
          auto it = tokens_.find(c.caption_id);
          if (it == tokens_.end())
            throw InvalidArgument("no token embeddings for caption '" +
                                  c.caption_id + "'");
          b.tokens.push_back(it->second);
        }
        break;
      case Kind::kVocabulary:
        b.token_ids.push_back(vocab_.encode(c.text));
        break;
    }
  }
  return b;
}

TextBatch TextInputSource::free_text(std::string_view text) const {
  if (!supports_free_text())
    throw InvalidArgument(
        "text path is backed by precomputed embedding files; free-text "
        "queries need a hashed or vocabulary text source");
  CaptionRecord c{"query", "", std::string(text)};
  return batch(std::span<const CaptionRecord>(&c, 1));
}

}  // namespace motret
