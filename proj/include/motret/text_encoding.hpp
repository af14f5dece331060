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

// Text side of the common space: normalization, precomputed embedding
// files, and the three trainable text encoders (recurrent aggregator over
// token embeddings, affine map over sentence embeddings, self-contained
// embedding table + GRU).

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "motret/autograd.hpp"
#include "motret/motion_data.hpp"

namespace motret {

/// Lowercases ASCII, drops punctuation and splits on whitespace. Throws
/// InvalidArgument("empty caption") when nothing remains.
std::vector<std::string> tokenize(std::string_view text);

/// Tokens joined by single spaces; the dedup key for captions.
std::string normalized_text(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  /// Every token seen in `texts`, in first-occurrence order after <unk>.
  static Vocabulary build(std::span<const std::string> texts);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  std::vector<int> encode(std::string_view text) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Deterministic stand-in for a frozen pretrained text model. Sentence
/// vectors are signed feature-hashed 1..max_ngram token n-grams (unit
/// norm); token vectors are Gaussian draws seeded by the token string.
/// All outputs are rounded to f32 so they agree with embedding files.
struct HashedFeaturizer {
  int sentence_dim = 128;
  int token_dim = 32;
  int max_ngram = 3;
  std::uint64_t seed = 0;

  RowVector sentence(std::string_view text) const;
  Matrix tokens(std::string_view text) const;
};

struct TokenEmbeddingSequence {
  std::string caption_id;
  Matrix vectors;  // L x d_tok
};

struct SentenceEmbedding {
  std::string caption_id;
  RowVector vector;
};

/// "TOKE": magic, u32 count, then per record u16 id length, UTF-8 id,
/// u32 L, u32 d_tok, L*d_tok f32.
void save_token_embeddings(std::span<const TokenEmbeddingSequence> records,
                           const std::filesystem::path& path);
std::vector<TokenEmbeddingSequence> load_token_embeddings(
    const std::filesystem::path& path);

/// "SENT": magic, u32 count, u32 d_sent, then per record u16 id length,
/// UTF-8 id, d_sent f32.
void save_sentence_embeddings(std::span<const SentenceEmbedding> records,
                              const std::filesystem::path& path);
std::vector<SentenceEmbedding> load_sentence_embeddings(
    const std::filesystem::path& path);

enum class TextVariant : std::uint8_t {
  kLstmAggregator,
  kAffine,
  kSelfContained,
};
std::string_view text_variant_name(TextVariant v);
TextVariant parse_text_variant(std::string_view name);

struct TextEncoderConfig {
  TextVariant variant = TextVariant::kAffine;
  /// d_tok for the aggregator, d_sent for the affine map, vocabulary size
  /// for the self-contained encoder.
  int input_dim = 128;
  int output_dim = 512;  // d_text
  int layers = 2;        // recurrent aggregator depth
  int embed_dim = 64;    // self-contained embedding width
};

/// Text encoder inputs for one batch; only the member matching the
/// encoder variant is read.
struct TextBatch {
  Matrix sentences;                          // B x d_sent
  std::vector<Matrix> tokens;                // per item L x d_tok
  std::vector<std::vector<int>> token_ids;   // per item vocabulary ids

  int size(TextVariant variant) const;
};

class TextEncoder {
 public:
  TextEncoder(const TextEncoderConfig& config, std::uint64_t seed);
  TextEncoder(const TextEncoderConfig& config, ParameterSet params);

  const TextEncoderConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  int output_dim() const { return config_.output_dim; }

  ag::Var forward(ag::Tape& tape, const TextBatch& batch);
  Matrix encode(const TextBatch& batch) const;

  RowVector encode_lstm_aggregator(const TokenEmbeddingSequence& tokens) const;
  RowVector encode_affine(const SentenceEmbedding& sentence) const;
  RowVector encode_self_contained(std::string_view text,
                                  const Vocabulary& vocab) const;

 private:
  ag::Var forward_sequences(ag::Tape& tape, const std::vector<Matrix>& items,
                            int width, bool from_ids,
                            const std::vector<std::vector<int>>& ids);

  TextEncoderConfig config_;
  ParameterSet params_;
};

/// Maps captions to TextBatch members for a given encoder variant, either
/// from the hashed featurizer, from loaded embedding files (by caption id),
/// or through a vocabulary.
class TextInputSource {
 public:
  static TextInputSource hashed(TextVariant variant, HashedFeaturizer f);
  static TextInputSource from_files(
      TextVariant variant, std::vector<SentenceEmbedding> sentences,
      std::vector<TokenEmbeddingSequence> tokens);
  static TextInputSource vocabulary(Vocabulary vocab);

  TextVariant variant() const { return variant_; }
  /// Width expected by the encoder's input (d_sent, d_tok or vocab size).
  int input_dim() const;
  bool supports_free_text() const;

  TextBatch batch(std::span<const CaptionRecord> captions) const;
  /// Throws InvalidArgument when the source is file-backed.
  TextBatch free_text(std::string_view text) const;

  const HashedFeaturizer* featurizer() const {
    return kind_ == Kind::kHashed ? &featurizer_ : nullptr;
  }
  const Vocabulary* vocab() const {
    return kind_ == Kind::kVocabulary ? &vocab_ : nullptr;
  }

 private:
  enum class Kind { kHashed, kFiles, kVocabulary };
  TextInputSource(Kind kind, TextVariant variant)
      : kind_(kind), variant_(variant) {}

  Kind kind_;
  TextVariant variant_;
  HashedFeaturizer featurizer_;
  Vocabulary vocab_;
  std::map<std::string, RowVector> sentences_;
  std::map<std::string, Matrix> tokens_;
  int file_dim_ = 0;
};

}  // namespace motret
