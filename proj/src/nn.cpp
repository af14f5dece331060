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

#include "motret/nn.hpp"

#include <cmath>

#include "motret/errors.hpp"

namespace motret::nn {

namespace {

Matrix uniform(int rows, int cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

std::vector<char> step_mask(const Sequence& seq, int t) {
  return {seq.valid.begin() + static_cast<std::ptrdiff_t>(t) * seq.batch,
          seq.valid.begin() + static_cast<std::ptrdiff_t>(t + 1) * seq.batch};
}

ag::Var param(ag::Tape& tape, ParameterSet& ps, const std::string& name) {
  return tape.param(ps.get(name));
}

// Input-to-gate projection for every step at once.
ag::Var input_gates(ag::Tape& tape, ParameterSet& ps,
                    const std::string& prefix, ag::Var x) {
  return ag::add_row(ag::matmul(x, param(tape, ps, prefix + ".wx")),
                     param(tape, ps, prefix + ".bx"));
}

}  // namespace

void init_linear(ParameterSet& ps, const std::string& prefix, int in, int out,
                 Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  ps.add(prefix + ".weight", uniform(in, out, bound, rng));
  ps.add(prefix + ".bias", Matrix::Zero(1, out));
}

ag::Var linear(ag::Tape& tape, ParameterSet& ps, const std::string& prefix,
               ag::Var x) {
  return ag::add_row(ag::matmul(x, param(tape, ps, prefix + ".weight")),
                     param(tape, ps, prefix + ".bias"));
}

void init_layer_norm(ParameterSet& ps, const std::string& prefix, int dim) {
  ps.add(prefix + ".gain", Matrix::Ones(1, dim));
  ps.add(prefix + ".bias", Matrix::Zero(1, dim));
}

ag::Var layer_norm(ag::Tape& tape, ParameterSet& ps,
                   const std::string& prefix, ag::Var x) {
  return ag::layer_norm(x, param(tape, ps, prefix + ".gain"),
                        param(tape, ps, prefix + ".bias"));
}

void init_gru(ParameterSet& ps, const std::string& prefix, int in, int hidden,
              Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  ps.add(prefix + ".wx", uniform(in, 3 * hidden, bound, rng));
  ps.add(prefix + ".wh", uniform(hidden, 3 * hidden, bound, rng));
  ps.add(prefix + ".bx", uniform(1, 3 * hidden, bound, rng));
  ps.add(prefix + ".bh", uniform(1, 3 * hidden, bound, rng));
}

RecurrentResult gru(ag::Tape& tape, ParameterSet& ps,
                    const std::string& prefix, const Sequence& seq,
                    bool reverse) {
  Parameter& wh_p = ps.get(prefix + ".wh");
  const auto hidden = static_cast<int>(wh_p.value.rows());
  if (seq.inputs.rows() != static_cast<Eigen::Index>(seq.steps) * seq.batch)
    throw ShapeError("gru: input rows != steps*batch");
  if (seq.inputs.cols() != ps.get(prefix + ".wx").value.rows())
    throw ShapeError("gru '" + prefix + "': input width " +
                     std::to_string(seq.inputs.cols()) + " does not match " +
                     std::to_string(ps.get(prefix + ".wx").value.rows()));

  ag::Var gx = input_gates(tape, ps, prefix, seq.inputs);
  ag::Var wh = tape.param(wh_p);
  ag::Var bh = param(tape, ps, prefix + ".bh");
  ag::Var h = tape.constant(Matrix::Zero(seq.batch, hidden));

  RecurrentResult out;
  out.step_hidden.resize(static_cast<std::size_t>(seq.steps));
  for (int i = 0; i < seq.steps; ++i) {
    const int t = reverse ? seq.steps - 1 - i : i;
    ag::Var x_t = ag::slice_rows(gx, static_cast<Eigen::Index>(t) * seq.batch,
                                 seq.batch);
    ag::Var h_t = ag::add_row(ag::matmul(h, wh), bh);
    ag::Var r = ag::sigmoid(ag::add(ag::slice_cols(x_t, 0, hidden),
                                    ag::slice_cols(h_t, 0, hidden)));
    ag::Var z = ag::sigmoid(ag::add(ag::slice_cols(x_t, hidden, hidden),
                                    ag::slice_cols(h_t, hidden, hidden)));
    ag::Var n = ag::tanh(
        ag::add(ag::slice_cols(x_t, 2 * hidden, hidden),
                ag::mul(r, ag::slice_cols(h_t, 2 * hidden, hidden))));
    // h' = n + z * (h - n)
    ag::Var fresh = ag::add(n, ag::mul(z, ag::sub(h, n)));
    h = ag::select_rows(fresh, h, step_mask(seq, t));
    out.step_hidden[static_cast<std::size_t>(t)] = h;
  }
  out.final_hidden = h;
  return out;
}

void init_lstm(ParameterSet& ps, const std::string& prefix, int in, int hidden,
               Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  ps.add(prefix + ".wx", uniform(in, 4 * hidden, bound, rng));
  ps.add(prefix + ".wh", uniform(hidden, 4 * hidden, bound, rng));
  ps.add(prefix + ".bx", uniform(1, 4 * hidden, bound, rng));
}

RecurrentResult lstm(ag::Tape& tape, ParameterSet& ps,
                     const std::string& prefix, const Sequence& seq) {
  Parameter& wh_p = ps.get(prefix + ".wh");
  const auto hidden = static_cast<int>(wh_p.value.rows());
  if (seq.inputs.cols() != ps.get(prefix + ".wx").value.rows())
    throw ShapeError("lstm '" + prefix + "': input width " +
                     std::to_string(seq.inputs.cols()) + " does not match " +
                     std::to_string(ps.get(prefix + ".wx").value.rows()));

  ag::Var gx = input_gates(tape, ps, prefix, seq.inputs);
  ag::Var wh = tape.param(wh_p);
  ag::Var h = tape.constant(Matrix::Zero(seq.batch, hidden));
  ag::Var c = h;

  RecurrentResult out;
  for (int t = 0; t < seq.steps; ++t) {
    ag::Var pre = ag::add(
        ag::slice_rows(gx, static_cast<Eigen::Index>(t) * seq.batch,
                       seq.batch),
        ag::matmul(h, wh));
    ag::Var in_gate = ag::sigmoid(ag::slice_cols(pre, 0, hidden));
    ag::Var forget = ag::sigmoid(ag::slice_cols(pre, hidden, hidden));
    ag::Var cand = ag::tanh(ag::slice_cols(pre, 2 * hidden, hidden));
    ag::Var out_gate = ag::sigmoid(ag::slice_cols(pre, 3 * hidden, hidden));
    ag::Var c_new = ag::add(ag::mul(forget, c), ag::mul(in_gate, cand));
    ag::Var h_new = ag::mul(out_gate, ag::tanh(c_new));
    const auto keep = step_mask(seq, t);
    c = ag::select_rows(c_new, c, keep);
    h = ag::select_rows(h_new, h, keep);
    out.step_hidden.push_back(h);
  }
  out.final_hidden = h;
  return out;
}

Sequence restack(const RecurrentResult& r, const Sequence& like) {
  Sequence next;
  next.inputs = ag::concat_rows(r.step_hidden);
  next.steps = like.steps;
  next.batch = like.batch;
  next.valid = like.valid;
  return next;
}

void init_attention(ParameterSet& ps, const std::string& prefix, int dim,
                    Rng& rng) {
  init_layer_norm(ps, prefix + ".norm", dim);
  init_linear(ps, prefix + ".qkv", dim, 3 * dim, rng);
  init_linear(ps, prefix + ".out", dim, dim, rng);
}

ag::Var attention_sublayer(ag::Tape& tape, ParameterSet& ps,
                           const std::string& prefix, ag::Var x, int heads,
                           std::shared_ptr<const ag::AttentionLayout> layout) {
  const Eigen::Index d = x.cols();
  ag::Var normed = layer_norm(tape, ps, prefix + ".norm", x);
  ag::Var qkv = linear(tape, ps, prefix + ".qkv", normed);
  ag::Var mixed = ag::grouped_attention(ag::slice_cols(qkv, 0, d),
                                        ag::slice_cols(qkv, d, d),
                                        ag::slice_cols(qkv, 2 * d, d), heads,
                                        std::move(layout));
  return ag::add(x, linear(tape, ps, prefix + ".out", mixed));
}

void init_feed_forward(ParameterSet& ps, const std::string& prefix, int dim,
                       int hidden, Rng& rng) {
  init_layer_norm(ps, prefix + ".norm", dim);
  init_linear(ps, prefix + ".fc1", dim, hidden, rng);
  init_linear(ps, prefix + ".fc2", hidden, dim, rng);
}

ag::Var feed_forward_sublayer(ag::Tape& tape, ParameterSet& ps,
                              const std::string& prefix, ag::Var x) {
  ag::Var h = layer_norm(tape, ps, prefix + ".norm", x);
  h = ag::gelu(linear(tape, ps, prefix + ".fc1", h));
  return ag::add(x, linear(tape, ps, prefix + ".fc2", h));
}

}  // namespace motret::nn
