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

#include "motret/common_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "motret/errors.hpp"
#include "motret/nn.hpp"

namespace motret {

double cosine_similarity(std::span<const double> u,
                         std::span<const double> v) {
  if (u.size() != v.size())
    throw ShapeError("cosine_similarity: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0))
    throw NumericError("cosine_similarity: zero vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

namespace {

void check_square(const Matrix& s, const char* what) {
  if (s.rows() != s.cols())
    throw ShapeError(std::string(what) + ": similarity matrix must be square");
  if (!s.allFinite())
    throw NumericError(std::string(what) + ": non-finite similarity");
}

/// Index of the largest entry other than `skip`; lowest index on ties.
template <typename Vec>
Eigen::Index hardest(const Vec& values, Eigen::Index skip) {
  Eigen::Index best = -1;
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    if (j == skip) continue;
    if (best < 0 || values[j] > values[best]) best = j;
  }
  return best;
}

}  // namespace

LossGradient triplet_loss_gradient(const Matrix& s, double margin) {
  check_square(s, "triplet_loss");
  const Eigen::Index b = s.rows();
  if (b < 2) throw InvalidArgument("triplet_loss needs a batch of at least 2");
  if (!(margin >= 0.0)) throw InvalidArgument("triplet margin must be >= 0");
  LossGradient out;
  out.d_similarity = Matrix::Zero(b, b);
  const double w = 1.0 / static_cast<double>(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    // Caption negatives for motion i (row i) and motion negatives for
    // caption i (column i).
    const Eigen::Index jc = hardest(s.row(i), i);
    const double row_arg = margin + (s(i, jc) - s(i, i));
    if (row_arg > 0.0) {
      out.value += row_arg;
      out.d_similarity(i, jc) += w;
      out.d_similarity(i, i) -= w;
    }
    const Eigen::Index jm = hardest(s.col(i), i);
    const double col_arg = margin + (s(jm, i) - s(i, i));
    if (col_arg > 0.0) {
      out.value += col_arg;
      out.d_similarity(jm, i) += w;
      out.d_similarity(i, i) -= w;
    }
  }
  out.value *= w;
  return out;
}

double triplet_loss(const Matrix& similarity, double margin) {
  return triplet_loss_gradient(similarity, margin).value;
}

double triplet_kink_distance(const Matrix& s, double margin) {
  check_square(s, "triplet_kink_distance");
  const Eigen::Index b = s.rows();
  double dist = std::numeric_limits<double>::infinity();
  auto runner_up_gap = [&](auto values, Eigen::Index skip) {
    const Eigen::Index top = hardest(values, skip);
    double second = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < values.size(); ++j)
      if (j != skip && j != top) second = std::max(second, double(values[j]));
    return std::pair{top, values[top] - second};
  };
  for (Eigen::Index i = 0; i < b; ++i) {
    auto [jc, gap_r] = runner_up_gap(s.row(i), i);
    auto [jm, gap_c] = runner_up_gap(s.col(i), i);
    dist = std::min({dist, gap_r, gap_c,
                     std::abs(margin + (s(i, jc) - s(i, i))),
                     std::abs(margin + (s(jm, i) - s(i, i)))});
  }
  return dist;
}

LossGradient infonce_loss_gradient(const Matrix& s, double log_tau) {
  check_square(s, "infonce_loss");
  const Eigen::Index b = s.rows();
  if (b < 1) throw InvalidArgument("infonce_loss needs a non-empty batch");
  if (!std::isfinite(log_tau))
    throw NumericError("infonce_loss: non-finite temperature");
  const double inv_tau = std::exp(-log_tau);
  const Matrix z = s * inv_tau;

  Matrix p_row(b, b), p_col(b, b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const double peak = z.row(i).maxCoeff();
    p_row.row(i) = (z.row(i).array() - peak).exp().matrix();
    const double sum = p_row.row(i).sum();
    total += (z(i, i) - peak) - std::log(sum);
    p_row.row(i) /= sum;
  }
  for (Eigen::Index j = 0; j < b; ++j) {
    const double peak = z.col(j).maxCoeff();
    p_col.col(j) = (z.col(j).array() - peak).exp().matrix();
    const double sum = p_col.col(j).sum();
    total += (z(j, j) - peak) - std::log(sum);
    p_col.col(j) /= sum;
  }
  LossGradient out;
  out.value = -total / static_cast<double>(b);
  Matrix dz = p_row + p_col;
  dz.diagonal().array() -= 2.0;
  dz /= static_cast<double>(b);
  out.d_similarity = dz * inv_tau;
  out.d_log_tau = -dz.cwiseProduct(z).sum();
  return out;
}

double infonce_loss(const Matrix& similarity, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw NumericError("infonce_loss: temperature must be positive");
  return infonce_loss_gradient(similarity, std::log(tau)).value;
}

namespace ag {

Var triplet_loss(Var similarity, double margin) {
  LossGradient g = triplet_loss_gradient(similarity.value(), margin);
  Matrix value(1, 1);
  value(0, 0) = g.value;
  return similarity.tape->record(
      std::move(value), {similarity},
      [s = similarity.id, ds = std::move(g.d_similarity)](Tape& t, int self) {
        t.grad(s) += t.grad(self)(0, 0) * ds;
      });
}

Var infonce_loss(Var similarity, Var log_tau) {
  if (log_tau.value().size() != 1)
    throw ShapeError("log_tau must be 1x1");
  LossGradient g =
      infonce_loss_gradient(similarity.value(), log_tau.value()(0, 0));
  Matrix value(1, 1);
  value(0, 0) = g.value;
  return similarity.tape->record(
      std::move(value), {similarity, log_tau},
      [s = similarity.id, lt = log_tau.id, ds = std::move(g.d_similarity),
       dlt = g.d_log_tau](Tape& t, int self) {
        const double up = t.grad(self)(0, 0);
        if (t.needs_grad(s)) t.grad(s) += up * ds;
        if (t.needs_grad(lt)) t.grad(lt)(0, 0) += up * dlt;
      });
}

}  // namespace ag

std::string_view loss_name(LossKind k) {
  return k == LossKind::kTriplet ? "triplet" : "infonce";
}

LossKind parse_loss(std::string_view name) {
  if (name == "triplet") return LossKind::kTriplet;
  if (name == "infonce") return LossKind::kInfoNce;
  throw InvalidArgument("unknown loss '" + std::string(name) + "'");
}

ProjectionHead::ProjectionHead(int in_dim, int out_dim, bool l2_normalize,
                               std::uint64_t seed)
    : in_dim_(in_dim), out_dim_(out_dim), l2_normalize_(l2_normalize) {
  if (in_dim < 1) throw ShapeError("projection input dim must be >= 1");
  if (out_dim < 2) throw ShapeError("d_common must be >= 2");
  nn::Rng rng(seed);
  nn::init_linear(params_, "proj", in_dim, out_dim, rng);
}

ProjectionHead::ProjectionHead(int in_dim, int out_dim, bool l2_normalize,
                               ParameterSet params)
    : in_dim_(in_dim), out_dim_(out_dim), l2_normalize_(l2_normalize),
      params_(std::move(params)) {
  const Parameter& w = params_.get("proj.weight");
  const Parameter& b = params_.get("proj.bias");
  if (w.value.rows() != in_dim || w.value.cols() != out_dim ||
      b.value.rows() != 1 || b.value.cols() != out_dim)
    throw ShapeError("projection tensors have the wrong shape");
}

ag::Var ProjectionHead::forward(ag::Tape& tape, ag::Var x) {
  ag::Var y = nn::linear(tape, params_, "proj", x);
  return l2_normalize_ ? ag::l2_normalize_rows(y) : y;
}

Matrix ProjectionHead::apply(const Matrix& x) const {
  ag::Tape tape;
  auto& self = const_cast<ProjectionHead&>(*this);
  return self.forward(tape, tape.constant(x)).value();
}

namespace {

ParameterSet temperature_set(double log_tau) {
  ParameterSet ps;
  Matrix v(1, 1);
  v(0, 0) = log_tau;
  ps.add("log_tau", std::move(v));
  return ps;
}

}  // namespace

RetrievalModel::RetrievalModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      motion_(config.motion, seed * 4 + 1),
      text_(config.text, seed * 4 + 2),
      motion_head_(config.motion.embedding_dim(), config.d_common,
                   config.l2_normalize, seed * 4 + 3),
      text_head_(config.text.output_dim, config.d_common, config.l2_normalize,
                 seed * 4 + 4),
      temperature_(temperature_set(std::log(config.tau_init))) {
  if (!(config.tau_init > 0.0))
    throw InvalidArgument("tau_init must be positive");
}

RetrievalModel::RetrievalModel(const ModelConfig& config, MotionEncoder motion,
                               TextEncoder text, ProjectionHead motion_head,
                               ProjectionHead text_head, double log_tau)
    : config_(config),
      motion_(std::move(motion)),
      text_(std::move(text)),
      motion_head_(std::move(motion_head)),
      text_head_(std::move(text_head)),
      temperature_(temperature_set(log_tau)) {
  if (motion_head_.in_dim() != motion_.embedding_dim() ||
      text_head_.in_dim() != text_.output_dim())
    throw ShapeError("projection heads do not match encoder widths");
}

double RetrievalModel::tau() const { return std::exp(log_tau()); }

std::vector<Parameter*> RetrievalModel::parameters() {
  std::vector<Parameter*> out;
  for (ParameterSet* ps : {&motion_.params(), &text_.params(),
                           &motion_head_.params(), &text_head_.params(),
                           &temperature_})
    for (std::size_t i = 0; i < ps->size(); ++i) out.push_back(&(*ps)[i]);
  return out;
}

std::vector<const Parameter*> RetrievalModel::parameters() const {
  auto mutable_params = const_cast<RetrievalModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

RetrievalModel::Forward RetrievalModel::forward(ag::Tape& tape,
                                                const PaddedBatch& motions,
                                                const TextBatch& texts,
                                                LossKind loss) {
  Forward f;
  f.motion = motion_head_.forward(tape, motion_.forward(tape, motions));
  f.text = text_head_.forward(tape, text_.forward(tape, texts));
  if (f.motion.rows() != f.text.rows())
    throw ShapeError("motion batch has " + std::to_string(f.motion.rows()) +
                     " items, text batch has " +
                     std::to_string(f.text.rows()));
  f.similarity = ag::matmul_nt(f.motion, f.text);
  f.loss = loss == LossKind::kTriplet
               ? ag::triplet_loss(f.similarity, config_.margin)
               : ag::infonce_loss(f.similarity,
                                  tape.param(temperature_.get("log_tau")));
  return f;
}

Matrix RetrievalModel::embed_motions(const PaddedBatch& motions) const {
  return motion_head_.apply(motion_.encode(motions));
}

Matrix RetrievalModel::embed_texts(const TextBatch& texts) const {
  return text_head_.apply(text_.encode(texts));
}

TrainState::TrainState(RetrievalModel m, AdamConfig a, std::uint64_t s)
    : model(std::move(m)), adam(a), seed(s) {
  for (const Parameter* p : model.parameters()) {
    first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double evaluate_loss(const RetrievalModel& model, const TrainBatch& batch,
                     LossKind loss) {
  ag::Tape tape;
  auto& m = const_cast<RetrievalModel&>(model);
  return m.forward(tape, batch.motions, batch.texts, loss).loss.value()(0, 0);
}

double train_step_inplace(TrainState& state, const TrainBatch& batch,
                          LossKind loss) {
  const std::uint64_t step = state.step + 1;
  auto params = state.model.parameters();
  for (Parameter* p : params) p->zero_grad();

  ag::Tape tape;
  double value = 0.0;
  try {
    auto f = state.model.forward(tape, batch.motions, batch.texts, loss);
    value = f.loss.value()(0, 0);
    if (!std::isfinite(value)) throw NumericError("non-finite loss");
    tape.backward(f.loss);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at step " +
                       std::to_string(step));
  }
  for (const Parameter* p : params)
    if (!p->grad.allFinite())
      throw NumericError("non-finite gradient for '" + p->name +
                         "' at step " + std::to_string(step));

  const AdamConfig& a = state.adam;
  const double c1 = 1.0 - std::pow(a.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(a.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = params[i]->grad;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = a.beta1 * m + (1.0 - a.beta1) * g;
    v = a.beta2 * v + (1.0 - a.beta2) * g.cwiseAbs2();
    params[i]->value.array() -=
        a.learning_rate * (m.array() / c1) /
        ((v.array() / c2).sqrt() + a.epsilon);
  }
  state.step = step;
  return value;
}

StepResult train_step(const TrainState& state, const TrainBatch& batch,
                      LossKind loss) {
  TrainState next = state;
  const double value = train_step_inplace(next, batch, loss);
  return {std::move(next), value};
}

bool GradCheckReport::passed() const {
  return std::all_of(tensors.begin(), tensors.end(),
                     [](const TensorGradReport& t) {
                       return t.within_tolerance;
                     });
}

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

TrainBatch random_batch(const GradCheckConfig& cfg, const ModelConfig& model,
                        std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len_dist(1, cfg.frames);
  std::vector<Matrix> seqs;
  for (int b = 0; b < cfg.batch; ++b) {
    const int len = b == 0 ? cfg.frames : len_dist(rng);
    seqs.push_back(gaussian(len, kPartFeatures, rng));
  }
  TrainBatch batch{pad_and_mask(seqs, cfg.max_len), {}};
  switch (model.text.variant) {
    case TextVariant::kAffine:
      batch.texts.sentences =
          gaussian(cfg.batch, model.text.input_dim, rng);
      break;
    case TextVariant::kLstmAggregator:
      for (int b = 0; b < cfg.batch; ++b)
        batch.texts.tokens.push_back(
            gaussian(len_dist(rng), model.text.input_dim, rng));
      break;
    case TextVariant::kSelfContained: {
      std::uniform_int_distribution<int> id_dist(0, model.text.input_dim - 1);
      for (int b = 0; b < cfg.batch; ++b) {
        std::vector<int> ids(static_cast<std::size_t>(len_dist(rng)));
        for (int& id : ids) id = id_dist(rng);
        batch.texts.token_ids.push_back(std::move(ids));
      }
      break;
    }
  }
  return batch;
}

template <typename LossFn>
void compare_gradients(std::vector<Parameter*> params, LossFn loss_at,
                       const GradCheckConfig& cfg, GradCheckReport& report) {
  for (Parameter* p : params) {
    TensorGradReport t;
    t.name = p->name;
    t.entries = static_cast<std::size_t>(p->value.size());
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + cfg.step;
      const double up = loss_at();
      x = saved - cfg.step;
      const double down = loss_at();
      x = saved;
      numeric.data()[i] = (up - down) / (2.0 * cfg.step);
    }
    const double floor =
        cfg.floor_fraction * numeric.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double a = p->grad.data()[i];
      const double n = numeric.data()[i];
      const double abs_err = std::abs(a - n);
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      const double rel = denom > 0.0 ? abs_err / denom : 0.0;
      t.max_abs_error = std::max(t.max_abs_error, abs_err);
      t.max_rel_error = std::max(t.max_rel_error, rel);
    }
    t.within_tolerance = t.max_rel_error <= cfg.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, t.max_rel_error);
    report.tensors.push_back(std::move(t));
  }
}

GradCheckReport projection_grad_check(const GradCheckConfig& cfg,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const ModelConfig& mc = cfg.model;
  const int in_dim = mc.text.output_dim;
  ProjectionHead head(in_dim, mc.d_common, mc.l2_normalize, seed + 17);
  const Matrix features = gaussian(cfg.batch, in_dim, rng);
  Matrix anchors = gaussian(cfg.batch, mc.d_common, rng);
  anchors.rowwise().normalize();
  const double log_tau = std::log(mc.tau_init);

  auto loss_on_tape = [&](ag::Tape& tape) {
    ag::Var c = head.forward(tape, tape.constant(features));
    ag::Var s = ag::matmul_nt(tape.constant(anchors), c);
    if (mc.loss == LossKind::kTriplet) return ag::triplet_loss(s, mc.margin);
    Matrix lt(1, 1);
    lt(0, 0) = log_tau;
    return ag::infonce_loss(s, tape.constant(std::move(lt)));
  };

  GradCheckReport report;
  report.tolerance = cfg.tolerance;
  head.params().zero_grad();
  {
    ag::Tape tape;
    ag::Var loss = loss_on_tape(tape);
    report.loss = loss.value()(0, 0);
    tape.backward(loss);
  }
  std::vector<Parameter*> params;
  for (std::size_t i = 0; i < head.params().size(); ++i)
    params.push_back(&head.params()[i]);
  compare_gradients(params, [&] {
    ag::Tape tape;
    return loss_on_tape(tape).value()(0, 0);
  }, cfg, report);
  return report;
}

}  // namespace

GradCheckReport grad_check(const GradCheckConfig& cfg, std::uint64_t seed) {
  if (cfg.max_len < cfg.frames)
    throw InvalidArgument("grad_check: max_len must be >= frames");
  if (cfg.target == GradCheckConfig::Target::kProjectionOnly)
    return projection_grad_check(cfg, seed);

  const LossKind loss = cfg.model.loss;
  ModelConfig mc = cfg.model;
  mc.motion.max_len = std::max(mc.motion.max_len, cfg.max_len);

  // For the triplet loss, redraw until the check point is away from every
  // hinge and hardest-negative kink and at least one hinge is active.
  constexpr int kAttempts = 64;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const std::uint64_t instance_seed = seed + 7919ull * attempt;
    std::mt19937_64 rng(instance_seed);
    RetrievalModel model(mc, instance_seed);
    const TrainBatch batch = random_batch(cfg, mc, rng);

    for (Parameter* p : model.parameters()) p->zero_grad();
    ag::Tape tape;
    auto f = model.forward(tape, batch.motions, batch.texts, loss);
    GradCheckReport report;
    report.tolerance = cfg.tolerance;
    report.loss = f.loss.value()(0, 0);
    if (loss == LossKind::kTriplet) {
      report.kink_distance =
          triplet_kink_distance(f.similarity.value(), mc.margin);
      if (report.kink_distance < 1e-3 || report.loss <= 0.0) continue;
    }
    tape.backward(f.loss);
    compare_gradients(model.parameters(), [&] {
      return evaluate_loss(model, batch, loss);
    }, cfg, report);
    return report;
  }
  throw NumericError("grad_check: no kink-free instance found");
}

}  // namespace motret
