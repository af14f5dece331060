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

// Parameterized layers shared by the text and motion encoders. Each layer
// is a pair: init_* registers tensors under a name prefix in a
// ParameterSet, and the matching apply function records the forward pass.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "motret/autograd.hpp"

namespace motret::nn {

using Rng = std::mt19937_64;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
void init_linear(ParameterSet& ps, const std::string& prefix, int in, int out,
                 Rng& rng);
ag::Var linear(ag::Tape& tape, ParameterSet& ps, const std::string& prefix,
               ag::Var x);

void init_layer_norm(ParameterSet& ps, const std::string& prefix, int dim);
ag::Var layer_norm(ag::Tape& tape, ParameterSet& ps,
                   const std::string& prefix, ag::Var x);

/// Time-major sequence: row t*batch + b holds step t of item b.
struct Sequence {
  ag::Var inputs;
  int steps = 0;
  int batch = 0;
  std::vector<char> valid;  // steps*batch, same ordering as `inputs`
};

struct RecurrentResult {
  ag::Var final_hidden;              // batch x hidden
  std::vector<ag::Var> step_hidden;  // one batch x hidden per step, in time order
};

/// GRU: r,z = sigmoid(x Wx + bx + h Wh + bh), n = tanh(x Wxn + bxn +
/// r*(h Whn + bhn)), h' = (1-z)*n + z*h. Invalid steps carry h unchanged,
/// so leading/trailing padding never reaches the state.
void init_gru(ParameterSet& ps, const std::string& prefix, int in, int hidden,
              Rng& rng);
RecurrentResult gru(ag::Tape& tape, ParameterSet& ps,
                    const std::string& prefix, const Sequence& seq,
                    bool reverse = false);

/// LSTM with input/forget/output gates and tanh candidate; same masking
/// rule as gru for both hidden and cell state.
void init_lstm(ParameterSet& ps, const std::string& prefix, int in, int hidden,
               Rng& rng);
RecurrentResult lstm(ag::Tape& tape, ParameterSet& ps,
                     const std::string& prefix, const Sequence& seq);

/// Stacks the per-step outputs of a recurrent layer back into a time-major
/// Sequence for the next layer.
Sequence restack(const RecurrentResult& r, const Sequence& like);

/// Pre-norm residual self-attention: x + Wo(attn(LN(x) Wqkv)).
void init_attention(ParameterSet& ps, const std::string& prefix, int dim,
                    Rng& rng);
ag::Var attention_sublayer(ag::Tape& tape, ParameterSet& ps,
                           const std::string& prefix, ag::Var x, int heads,
                           std::shared_ptr<const ag::AttentionLayout> layout);

/// Pre-norm residual position-wise feed-forward: x + W2 gelu(W1 LN(x)).
void init_feed_forward(ParameterSet& ps, const std::string& prefix, int dim,
                       int hidden, Rng& rng);
ag::Var feed_forward_sublayer(ag::Tape& tape, ParameterSet& ps,
                              const std::string& prefix, ag::Var x);

}  // namespace motret::nn
