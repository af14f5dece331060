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

// Minimal tape-based reverse-mode differentiation over dense row-major
// double matrices. Every op records a closure that maps its output gradient
// to input gradients; Tape::backward replays them in reverse creation order.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace motret {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// A named trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Ordered registry of parameters. Addresses are stable for the lifetime of
/// the set, so encoders may hold raw pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(const std::string& name, Matrix value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

namespace ag {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Var constant(Matrix value);
  Var param(Parameter& p);

  /// Records a node. `inputs` decide whether the node needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward bw);
  Var record(Matrix value, std::span<const Var> inputs, Backward bw);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer of node `id`, allocated (zeroed) on first access.
  Matrix& grad(int id);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates. Parameter
  /// gradients are accumulated (added) into Parameter::grad.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Linear algebra.
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // element-wise
Var add_row(Var a, Var row);  // broadcast a 1xN row over every row of a
Var scale(Var a, double s);

// Element-wise nonlinearities.
Var sigmoid(Var a);
Var tanh(Var a);
Var gelu(Var a);  // tanh approximation, smooth everywhere

// Structural ops.
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// out.row(i) = a.row(index[i]); gradient scatter-adds.
Var gather_rows(Var a, std::vector<int> index);
/// Rows where keep[i] is true come from `fresh`, the others from `stale`.
Var select_rows(Var fresh, Var stale, std::vector<char> keep);
/// out.row(s) = mean of a.row(r) for r in segments[s]; segments non-empty.
Var segment_mean(Var a, std::vector<std::vector<int>> segments);

// Normalization.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var l2_normalize_rows(Var x);

/// Softmax over the entries of `scores` whose mask is set; masked entries get
/// weight exactly 0. At least one entry must be unmasked.
std::vector<double> masked_softmax(std::span<const double> scores,
                                   std::span<const char> mask);

/// Multi-head scaled dot-product attention restricted to groups of rows.
/// Each row belongs to at most one group and attends only to valid rows of
/// its own group. Rows that are invalid or in no group produce zeros.
struct AttentionLayout {
  std::vector<std::vector<int>> groups;
  std::vector<char> valid;  // one entry per row
};
Var grouped_attention(Var q, Var k, Var v, int heads,
                      std::shared_ptr<const AttentionLayout> layout);

}  // namespace ag
}  // namespace motret
