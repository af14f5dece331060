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

#include "motret/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "motret/errors.hpp"

namespace motret {

ParameterSet::ParameterSet(const ParameterSet& other) {
  for (const auto& p : other.params_)
    params_.push_back(std::make_unique<Parameter>(*p));
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    ParameterSet copy(other);
    params_ = std::move(copy.params_);
  }
  return *this;
}

Parameter& ParameterSet::add(const std::string& name, Matrix value) {
  if (contains(name)) throw ShapeError("duplicate parameter '" + name + "'");
  params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  return *params_.back();
}

Parameter& ParameterSet::get(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw ShapeError("unknown parameter '" + name + "'");
}

const Parameter& ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ShapeError("unknown parameter '" + name + "'");
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return true;
  return false;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

namespace ag {

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs,
                 Backward bw) {
  return record(std::move(value),
                std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(bw));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward bw) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape != this) throw std::logic_error("mixing tapes");
    n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad.setZero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.value().size() != 1)
    throw ShapeError("backward root must be a scalar");
  grad(root.id)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()));
  Matrix out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b},
                        [a = a.id, b = b.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.needs_grad(a))
                            t.grad(a).noalias() += g * t.value(b).transpose();
                          if (t.needs_grad(b))
                            t.grad(b).noalias() += t.value(a).transpose() * g;
                        });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: column mismatch");
  Matrix out = a.value() * b.value().transpose();
  return a.tape->record(std::move(out), {a, b},
                        [a = a.id, b = b.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.needs_grad(a))
                            t.grad(a).noalias() += g * t.value(b);
                          if (t.needs_grad(b))
                            t.grad(b).noalias() += g.transpose() * t.value(a);
                        });
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  return a.tape->record(a.value() + b.value(), {a, b},
                        [a = a.id, b = b.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.needs_grad(a)) t.grad(a) += g;
                          if (t.needs_grad(b)) t.grad(b) += g;
                        });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  return a.tape->record(a.value() - b.value(), {a, b},
                        [a = a.id, b = b.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.needs_grad(a)) t.grad(a) += g;
                          if (t.needs_grad(b)) t.grad(b) -= g;
                        });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b},
                        [a = a.id, b = b.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.needs_grad(a))
                            t.grad(a) += g.cwiseProduct(t.value(b));
                          if (t.needs_grad(b))
                            t.grad(b) += g.cwiseProduct(t.value(a));
                        });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_row: expected 1x" + std::to_string(a.cols()) +
                     " row, got " + std::to_string(row.rows()) + "x" +
                     std::to_string(row.cols()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape->record(std::move(out), {a, row},
                        [a = a.id, r = row.id](Tape& t, int self) {
                          const Matrix& g = t.grad(self);
                          if (t.needs_grad(a)) t.grad(a) += g;
                          if (t.needs_grad(r))
                            t.grad(r) += g.colwise().sum();
                        });
}

Var scale(Var a, double s) {
  return a.tape->record(a.value() * s, {a},
                        [a = a.id, s](Tape& t, int self) {
                          t.grad(a) += t.grad(self) * s;
                        });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr(&sigmoid_scalar);
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(a).array() +=
        t.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh().matrix();
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(a).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var gelu(Var a) {
  Matrix out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  });
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape& t, int self) {
    const Matrix& x = t.value(a);
    Matrix d = x.unaryExpr([](double v) {
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      return 0.5 * (1.0 + th) +
             0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    });
    t.grad(a) += t.grad(self).cwiseProduct(d);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols out of range");
  Matrix out = a.value().middleCols(start, count);
  return a.tape->record(std::move(out), {a},
                        [a = a.id, start, count](Tape& t, int self) {
                          t.grad(a).middleCols(start, count) += t.grad(self);
                        });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("slice_rows out of range");
  Matrix out = a.value().middleRows(start, count);
  return a.tape->record(std::move(out), {a},
                        [a = a.id, start, count](Tape& t, int self) {
                          t.grad(a).middleRows(start, count) += t.grad(self);
                        });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts[0].rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(c);
    c += p.cols();
  }
  return parts[0].tape->record(
      std::move(out), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!t.needs_grad(ids[i])) continue;
          Matrix& gi = t.grad(ids[i]);
          gi += g.middleCols(offsets[i], gi.cols());
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts[0].cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id);
    offsets.push_back(r);
    r += p.rows();
  }
  return parts[0].tape->record(
      std::move(out), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (!t.needs_grad(ids[i])) continue;
          Matrix& gi = t.grad(ids[i]);
          gi += g.middleRows(offsets[i], gi.rows());
        }
      });
}

Var gather_rows(Var a, std::vector<int> index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows())
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) +
                       " out of range " + std::to_string(a.rows()));
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  return a.tape->record(std::move(out), {a},
                        [a = a.id, index = std::move(index)](Tape& t,
                                                             int self) {
                          const Matrix& g = t.grad(self);
                          Matrix& ga = t.grad(a);
                          for (std::size_t i = 0; i < index.size(); ++i)
                            ga.row(index[i]) +=
                                g.row(static_cast<Eigen::Index>(i));
                        });
}

Var select_rows(Var fresh, Var stale, std::vector<char> keep) {
  check_same_shape(fresh, stale, "select_rows");
  if (static_cast<Eigen::Index>(keep.size()) != fresh.rows())
    throw ShapeError("select_rows: mask length mismatch");
  Matrix out = stale.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    if (keep[i]) out.row(i) = fresh.value().row(i);
  return fresh.tape->record(
      std::move(out), {fresh, stale},
      [f = fresh.id, s = stale.id, keep = std::move(keep)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const bool nf = t.needs_grad(f), ns = t.needs_grad(s);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          if (keep[i]) {
            if (nf) t.grad(f).row(i) += g.row(i);
          } else if (ns) {
            t.grad(s).row(i) += g.row(i);
          }
        }
      });
}

Var segment_mean(Var a, std::vector<std::vector<int>> segments) {
  Matrix out(static_cast<Eigen::Index>(segments.size()), a.cols());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (segments[s].empty()) throw ShapeError("segment_mean: empty segment");
    RowVector acc = RowVector::Zero(a.cols());
    for (int r : segments[s]) acc += a.value().row(r);
    out.row(static_cast<Eigen::Index>(s)) =
        acc / static_cast<double>(segments[s].size());
  }
  return a.tape->record(
      std::move(out), {a},
      [a = a.id, segments = std::move(segments)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad(a);
        for (std::size_t s = 0; s < segments.size(); ++s) {
          const double w = 1.0 / static_cast<double>(segments[s].size());
          for (int r : segments[s])
            ga.row(r) += w * g.row(static_cast<Eigen::Index>(s));
        }
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 ||
      bias.cols() != n)
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(n));
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std[r];
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array())
                   .rowwise() +
               bias.value().row(0).array();
  return x.tape->record(
      std::move(out), {x, gain, bias},
      [x = x.id, g_id = gain.id, b_id = bias.id, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape& t, int self) {
        const Matrix& dy = t.grad(self);
        if (t.needs_grad(g_id))
          t.grad(g_id) += dy.cwiseProduct(xhat).colwise().sum();
        if (t.needs_grad(b_id)) t.grad(b_id) += dy.colwise().sum();
        if (!t.needs_grad(x)) return;
        const RowVector& gain_row = t.value(g_id).row(0);
        Matrix& dx = t.grad(x);
        const double n = static_cast<double>(dy.cols());
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
          RowVector dxhat = dy.row(r).cwiseProduct(gain_row);
          const double s1 = dxhat.sum();
          const double s2 = dxhat.dot(xhat.row(r));
          dx.row(r).array() += (inv_std[r] / n) *
                               (n * dxhat.array() - s1 -
                                xhat.row(r).array() * s2);
        }
      });
}

Var l2_normalize_rows(Var x) {
  const Matrix& xv = x.value();
  Eigen::VectorXd norms = xv.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r)
    if (!(norms[r] > 0.0))
      throw NumericError("l2_normalize_rows: zero-norm row " +
                         std::to_string(r));
  Matrix out = xv.array().colwise() / norms.array();
  return x.tape->record(
      std::move(out), {x},
      [x = x.id, norms = std::move(norms)](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& dy = t.grad(self);
        Matrix& dx = t.grad(x);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          const double proj = y.row(r).dot(dy.row(r));
          dx.row(r) += (dy.row(r) - proj * y.row(r)) / norms[r];
        }
      });
}

std::vector<double> masked_softmax(std::span<const double> scores,
                                   std::span<const char> mask) {
  if (scores.size() != mask.size())
    throw ShapeError("masked_softmax: mask length mismatch");
  double peak = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    any = true;
    peak = std::max(peak, scores[i]);
  }
  if (!any) throw ShapeError("masked_softmax: every position is masked");
  std::vector<double> w(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    w[i] = std::exp(scores[i] - peak);
    total += w[i];
  }
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) w[i] /= total;
  return w;
}

Var grouped_attention(Var q, Var k, Var v, int heads,
                      std::shared_ptr<const AttentionLayout> layout) {
  check_same_shape(q, k, "grouped_attention");
  check_same_shape(q, v, "grouped_attention");
  const Eigen::Index d = q.cols();
  if (heads < 1 || d % heads != 0)
    throw ShapeError("grouped_attention: heads must divide model dim");
  if (static_cast<Eigen::Index>(layout->valid.size()) != q.rows())
    throw ShapeError("grouped_attention: validity mask length mismatch");
  const Eigen::Index dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out = Matrix::Zero(q.rows(), d);

  // probs[g * heads + h] is the n_g x n_g weight matrix of group g, head h.
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(layout->groups.size() * static_cast<std::size_t>(heads));
  std::vector<double> row_scores;
  std::vector<char> row_mask;
  for (const auto& group : layout->groups) {
    const auto n = static_cast<Eigen::Index>(group.size());
    row_mask.resize(group.size());
    for (std::size_t i = 0; i < group.size(); ++i)
      row_mask[i] = layout->valid[group[i]];
    for (int h = 0; h < heads; ++h) {
      Matrix p = Matrix::Zero(n, n);
      const Eigen::Index c0 = h * dh;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!row_mask[i]) continue;
        row_scores.assign(group.size(), 0.0);
        for (Eigen::Index j = 0; j < n; ++j)
          if (row_mask[j])
            row_scores[j] = qv.row(group[i]).segment(c0, dh).dot(
                                kv.row(group[j]).segment(c0, dh)) *
                            inv_sqrt;
        const std::vector<double> w = masked_softmax(row_scores, row_mask);
        for (Eigen::Index j = 0; j < n; ++j) {
          if (!row_mask[j]) continue;
          p(i, j) = w[j];
          out.row(group[i]).segment(c0, dh) +=
              w[j] * vv.row(group[j]).segment(c0, dh);
        }
      }
      probs->push_back(std::move(p));
    }
  }

  return q.tape->record(
      std::move(out), {q, k, v},
      [q = q.id, k = k.id, v = v.id, heads, dh, inv_sqrt, layout,
       probs](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& qv = t.value(q);
        const Matrix& kv = t.value(k);
        const Matrix& vv = t.value(v);
        const bool nq = t.needs_grad(q), nk = t.needs_grad(k),
                   nv = t.needs_grad(v);
        std::size_t slot = 0;
        for (const auto& group : layout->groups) {
          const auto n = static_cast<Eigen::Index>(group.size());
          for (int h = 0; h < heads; ++h, ++slot) {
            const Matrix& p = (*probs)[slot];
            const Eigen::Index c0 = h * dh;
            for (Eigen::Index i = 0; i < n; ++i) {
              if (!layout->valid[group[i]]) continue;
              const auto go = g.row(group[i]).segment(c0, dh);
              // dP_ij = dO_i . V_j ; dS_ij = P_ij (dP_ij - sum_k P_ik dP_ik)
              RowVector dp = RowVector::Zero(n);
              double mix = 0.0;
              for (Eigen::Index j = 0; j < n; ++j) {
                if (p(i, j) == 0.0) continue;
                dp[j] = go.dot(vv.row(group[j]).segment(c0, dh));
                mix += p(i, j) * dp[j];
                if (nv)
                  t.grad(v).row(group[j]).segment(c0, dh) += p(i, j) * go;
              }
              for (Eigen::Index j = 0; j < n; ++j) {
                if (p(i, j) == 0.0) continue;
                const double ds = p(i, j) * (dp[j] - mix) * inv_sqrt;
                if (nq)
                  t.grad(q).row(group[i]).segment(c0, dh) +=
                      ds * kv.row(group[j]).segment(c0, dh);
                if (nk)
                  t.grad(k).row(group[j]).segment(c0, dh) +=
                      ds * qv.row(group[i]).segment(c0, dh);
              }
            }
          }
        }
      });
}

}  // namespace ag
}  // namespace motret
