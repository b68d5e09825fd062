// Copyright 2026 The ARO Probe Authors.
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

/// \file negclip.hpp
/// Contrastive training of projection heads with hard negative captions and
/// mined neighbor images.
///
/// For a batch of N' images, N' captions and (optionally) N' negative
/// captions, all projected and L2-normalized, the logits are
///
///     L = s * U [C ; G]^T            (N' x 2N', or N' x N' without G)
///
/// with s = min(exp(logit_scale), 100). The image-to-text term is the mean
/// row-wise cross-entropy over all columns with target column j for row j.
/// The text-to-image term is the mean column-wise cross-entropy over the
/// N' x N' true-caption block only: negative-caption columns have no
/// matching image and get no column-wise term. The loss is their average.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "aro/embeddings.hpp"
#include "aro/error.hpp"
#include "aro/eval.hpp"
#include "aro/rng.hpp"

namespace aro::negclip {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kMaxScale = 100.0;
inline const double kInitLogitScale = std::log(1.0 / 0.07);

struct ProjectionModel {
  Matrix image_proj;  // d_in x d_out
  Matrix text_proj;   // d_in x d_out
  double logit_scale = kInitLogitScale;

  std::size_t d_in() const noexcept { return static_cast<std::size_t>(image_proj.rows()); }
  std::size_t d_out() const noexcept { return static_cast<std::size_t>(image_proj.cols()); }

  bool scale_clamped() const noexcept { return std::exp(logit_scale) > kMaxScale; }
  double scale() const noexcept { return std::min(std::exp(logit_scale), kMaxScale); }

  bool finite() const {
    return image_proj.allFinite() && text_proj.allFinite() && std::isfinite(logit_scale);
  }

  /// Gaussian init with std 1/sqrt(d_in), drawn with Box-Muller from the
  /// pinned stream so that every platform starts from the same weights.
  static ProjectionModel random(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
    SplitMix64 rng(seed);
    auto gaussian = [&] {
      const double u1 = 1.0 - rng.uniform();
      const double u2 = rng.uniform();
      return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    };
    const double sd = 1.0 / std::sqrt(static_cast<double>(d_in));
    ProjectionModel m;
    m.image_proj.resize(static_cast<Eigen::Index>(d_in), static_cast<Eigen::Index>(d_out));
    m.text_proj.resizeLike(m.image_proj);
    for (Eigen::Index i = 0; i < m.image_proj.size(); ++i) m.image_proj.data()[i] = sd * gaussian();
    for (Eigen::Index i = 0; i < m.text_proj.size(); ++i) m.text_proj.data()[i] = sd * gaussian();
    return m;
  }
};

enum class RowSource : std::uint8_t { Base, MinedNeighbor };

struct ContrastiveBatch {
  Matrix images;     // N' x d_in
  Matrix captions;   // N' x d_in
  Matrix negatives;  // N' x d_in, or 0 rows when negative captions are off
  std::vector<std::size_t> items;
  std::vector<RowSource> provenance;

  std::size_t size() const noexcept { return static_cast<std::size_t>(images.rows()); }
  bool has_negatives() const noexcept { return negatives.rows() > 0; }
};

/// Frozen base embeddings for image/caption pairs plus hard-negative stores.
struct PairedData {
  Matrix images;
  Matrix captions;
  std::vector<Matrix> negatives;                     // per item: candidate negatives
  std::vector<std::vector<std::size_t>> neighbors;  // per item: K nearest images

  std::size_t size() const noexcept { return static_cast<std::size_t>(images.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(images.cols()); }
};

struct BatchOptions {
  bool use_neg_captions = true;
  bool use_neg_images = false;
};

/// Base items first, then at most one mined neighbor per base item (one hop,
/// items already in the batch are skipped). Each included item carries one
/// sampled negative caption. Sampling for item i uses derive_seed(seed, i).
inline ContrastiveBatch assemble_batch(const PairedData& data,
                                       const std::vector<std::size_t>& base,
                                       BatchOptions opts, std::uint64_t seed) {
  std::vector<std::size_t> items;
  std::vector<RowSource> source;
  std::set<std::size_t> seen;
  for (auto i : base) {
    if (i >= data.size()) throw DataError("batch index out of range");
    if (seen.insert(i).second) {
      items.push_back(i);
      source.push_back(RowSource::Base);
    }
  }
  if (opts.use_neg_images) {
    const std::size_t n_base = items.size();
    for (std::size_t b = 0; b < n_base; ++b) {
      const auto i = items[b];
      if (i >= data.neighbors.size() || data.neighbors[i].empty())
        throw DataError("no mined neighbors for item " + std::to_string(i));
      SplitMix64 rng(derive_seed(derive_seed(seed, i), 1));
      const auto& nb = data.neighbors[i];
      const auto pick = nb[rng.bounded(nb.size())];
      if (seen.insert(pick).second) {
        items.push_back(pick);
        source.push_back(RowSource::MinedNeighbor);
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(items.size());
  const auto d = static_cast<Eigen::Index>(data.dim());
  ContrastiveBatch batch;
  batch.images.resize(n, d);
  batch.captions.resize(n, d);
  if (opts.use_neg_captions) batch.negatives.resize(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = items[static_cast<std::size_t>(r)];
    batch.images.row(r) = data.images.row(static_cast<Eigen::Index>(i));
    batch.captions.row(r) = data.captions.row(static_cast<Eigen::Index>(i));
    if (opts.use_neg_captions) {
      if (i >= data.negatives.size() || data.negatives[i].rows() == 0)
        throw DataError("item " + std::to_string(i) + " has no negative captions");
      SplitMix64 rng(derive_seed(derive_seed(seed, i), 0));
      const auto& pool = data.negatives[i];
      batch.negatives.row(r) =
          pool.row(static_cast<Eigen::Index>(rng.bounded(static_cast<std::uint64_t>(pool.rows()))));
    }
  }
  batch.items = std::move(items);
  batch.provenance = std::move(source);
  return batch;
}

// ---------------------------------------------------------------------------
// Loss

struct Gradient {
  Matrix image_proj;
  Matrix text_proj;
  double logit_scale = 0.0;
};

struct LossValue {
  double loss = 0.0;
  double image_to_text = 0.0;
  double text_to_image = 0.0;
};

namespace detail {

struct Normalized {
  Matrix raw;
  Matrix unit;
  Vector norms;
};

inline Normalized project(const Matrix& x, const Matrix& w, const char* what) {
  Normalized out;
  out.raw = x * w;
  out.norms = out.raw.rowwise().norm();
  for (Eigen::Index i = 0; i < out.norms.size(); ++i)
    if (!(out.norms(i) > 0.0) || !std::isfinite(out.norms(i)))
      throw NumericError(std::string("projected ") + what + " row " + std::to_string(i) +
                         " has norm " + std::to_string(out.norms(i)));
  out.unit = out.norms.cwiseInverse().asDiagonal() * out.raw;
  return out;
}

// d/dz of z/|z| applied to upstream du, row by row.
inline Matrix normalize_backward(const Normalized& n, const Matrix& du) {
  const Vector along = (n.unit.cwiseProduct(du)).rowwise().sum();
  return n.norms.cwiseInverse().asDiagonal() * (du - along.asDiagonal() * n.unit);
}

inline void check_batch(const ProjectionModel& model, const ContrastiveBatch& b) {
  const auto d = static_cast<Eigen::Index>(model.d_in());
  if (b.images.rows() == 0) throw DataError("empty contrastive batch");
  if (b.images.cols() != d || b.captions.cols() != d || (b.has_negatives() && b.negatives.cols() != d))
    throw DataError("batch dim does not match model input dim " + std::to_string(d));
  if (b.captions.rows() != b.images.rows() || (b.has_negatives() && b.negatives.rows() != b.images.rows()))
    throw DataError("batch blocks are not row-aligned");
}

inline LossValue evaluate(const ProjectionModel& model, const ContrastiveBatch& batch,
                          Gradient* grad) {
  check_batch(model, batch);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto img = project(batch.images, model.image_proj, "image");
  const auto cap = project(batch.captions, model.text_proj, "caption");
  std::optional<Normalized> neg;
  if (batch.has_negatives()) neg = project(batch.negatives, model.text_proj, "negative caption");

  const Eigen::Index cols = neg ? 2 * n : n;
  Matrix text_units(cols, img.unit.cols());
  text_units.topRows(n) = cap.unit;
  if (neg) text_units.bottomRows(n) = neg->unit;

  const double scale = model.scale();
  const Matrix sim = img.unit * text_units.transpose();
  const Matrix logits = scale * sim;

  // Row-wise softmax over all columns.
  Matrix row_p(n, cols);
  double i2t = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double m = logits.row(j).maxCoeff();
    const auto e = (logits.row(j).array() - m).exp();
    const double z = e.sum();
    row_p.row(j) = e / z;
    i2t += m + std::log(z) - logits(j, j);
  }
  i2t /= static_cast<double>(n);

  // Column-wise softmax over the true-caption block only.
  Matrix col_q(n, n);
  double t2i = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double m = logits.col(k).maxCoeff();
    const auto e = (logits.col(k).array() - m).exp();
    const double z = e.sum();
    col_q.col(k) = e / z;
    t2i += m + std::log(z) - logits(k, k);
  }
  t2i /= static_cast<double>(n);

  LossValue value{0.5 * (i2t + t2i), i2t, t2i};
  if (!std::isfinite(value.loss))
    throw NumericError("non-finite loss (image_to_text " + std::to_string(i2t) +
                       ", text_to_image " + std::to_string(t2i) + ")");
  if (!grad) return value;

  const double inv = 0.5 / static_cast<double>(n);
  Matrix g = inv * row_p;
  g.leftCols(n) += inv * col_q;
  for (Eigen::Index j = 0; j < n; ++j) g(j, j) -= 2.0 * inv;

  grad->logit_scale = model.scale_clamped() ? 0.0 : scale * g.cwiseProduct(sim).sum();
  const Matrix d_sim = scale * g;
  const Matrix d_img_unit = d_sim * text_units;
  const Matrix d_text_units = d_sim.transpose() * img.unit;

  grad->image_proj = batch.images.transpose() * normalize_backward(img, d_img_unit);
  grad->text_proj = batch.captions.transpose() * normalize_backward(cap, d_text_units.topRows(n));
  if (neg)
    grad->text_proj +=
        batch.negatives.transpose() * normalize_backward(*neg, d_text_units.bottomRows(n));
  return value;
}

}  // namespace detail

inline LossValue loss_forward(const ProjectionModel& model, const ContrastiveBatch& batch) {
  return detail::evaluate(model, batch, nullptr);
}

inline Gradient loss_gradient(const ProjectionModel& model, const ContrastiveBatch& batch,
                              LossValue* value = nullptr) {
  Gradient g;
  auto v = detail::evaluate(model, batch, &g);
  if (value) *value = v;
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::size_t warmup_steps = 50;
  std::size_t total_steps = 0;  // 0: epochs x batches per epoch
  std::size_t neighbor_k = 3;
  bool use_neg_captions = true;
  bool use_neg_images = true;
  std::uint64_t seed = 0;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  std::size_t d_out = 64;

  void validate() const {
    if (epochs < 1) throw UsageError("epochs must be at least 1");
    if (batch_size < 1) throw UsageError("batch size must be at least 1");
    if (d_out < 1) throw UsageError("d_out must be at least 1");
    if (total_steps && warmup_steps > total_steps)
      throw UsageError("warmup steps exceed total steps");
    if (use_neg_images && neighbor_k < 1) throw UsageError("neighbor k must be at least 1");
    if (!(learning_rate >= 0.0)) throw UsageError("learning rate must be non-negative");
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["warmup_steps"] = c.warmup_steps;
  j["total_steps"] = c.total_steps;
  j["neighbor_k"] = c.neighbor_k;
  j["use_neg_captions"] = c.use_neg_captions;
  j["use_neg_images"] = c.use_neg_images;
  j["seed"] = c.seed;
  j["weight_decay"] = c.weight_decay;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["d_out"] = c.d_out;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.neighbor_k = j.value("neighbor_k", c.neighbor_k);
  c.use_neg_captions = j.value("use_neg_captions", c.use_neg_captions);
  c.use_neg_images = j.value("use_neg_images", c.use_neg_images);
  c.seed = j.value("seed", c.seed);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.d_out = j.value("d_out", c.d_out);
  return c;
}

/// Linear warmup from 0 (lr * step / warmup), then cosine decay reaching 0 at
/// `total` steps.
inline double learning_rate_at(double peak, std::size_t warmup, std::size_t total,
                               std::size_t step) {
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  const double span = static_cast<double>(total - warmup);
  const double t = static_cast<double>(step - warmup) / span;
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * t));
}

/// Adam with decoupled weight decay on the projection matrices; the logit
/// scale is not decayed and is kept within [0, ln 100].
class AdamW {
 public:
  explicit AdamW(const ProjectionModel& shape)
      : m_img_(Matrix::Zero(shape.image_proj.rows(), shape.image_proj.cols())),
        v_img_(m_img_),
        m_txt_(m_img_),
        v_txt_(m_img_) {}

  void step(ProjectionModel& model, const Gradient& g, double lr, const TrainConfig& c) {
    ++t_;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
    auto update = [&](Matrix& p, const Matrix& grad, Matrix& m, Matrix& v) {
      m = c.beta1 * m + (1.0 - c.beta1) * grad;
      v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
      p *= (1.0 - lr * c.weight_decay);
      p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
    };
    update(model.image_proj, g.image_proj, m_img_, v_img_);
    update(model.text_proj, g.text_proj, m_txt_, v_txt_);
    m_s_ = c.beta1 * m_s_ + (1.0 - c.beta1) * g.logit_scale;
    v_s_ = c.beta2 * v_s_ + (1.0 - c.beta2) * g.logit_scale * g.logit_scale;
    model.logit_scale -= lr * (m_s_ / bc1) / (std::sqrt(v_s_ / bc2) + c.eps);
    model.logit_scale = std::clamp(model.logit_scale, 0.0, std::log(kMaxScale));
  }

 private:
  Matrix m_img_, v_img_, m_txt_, v_txt_;
  double m_s_ = 0.0, v_s_ = 0.0;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct TraceRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double val_r1 = std::numeric_limits<double>::quiet_NaN();  // set at epoch ends
};

struct TrainResult {
  ProjectionModel model;  // best by validation R@1 (final when no validation)
  ProjectionModel final_model;
  std::vector<TraceRow> trace;
  std::size_t steps = 0;
  double best_val_r1 = std::numeric_limits<double>::quiet_NaN();
  std::size_t best_epoch = 0;
};

/// Unit-norm projections as a float embedding set with zero-padded row ids.
inline emb::EmbeddingSet project_set(const Matrix& x, const Matrix& w, emb::Kind kind,
                                     const std::vector<std::string>& ids = {}) {
  const auto u = detail::project(x, w, "embedding").unit;
  emb::EmbeddingSet set(kind, static_cast<std::size_t>(u.cols()));
  char buf[32];
  std::vector<double> row(static_cast<std::size_t>(u.cols()));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    std::string id;
    if (ids.empty()) {
      std::snprintf(buf, sizeof buf, "%010lld", static_cast<long long>(i));
      id = buf;
    } else {
      id = ids[static_cast<std::size_t>(i)];
    }
    for (Eigen::Index k = 0; k < u.cols(); ++k) row[static_cast<std::size_t>(k)] = u(i, k);
    set.add(std::move(id), std::span<const double>(row));
  }
  return set;
}

/// Mean of image->text and text->image R@1 on 1:1 pairs.
inline double paired_recall_at_1(const ProjectionModel& model, const PairedData& pairs) {
  const auto imgs = project_set(pairs.images, model.image_proj, emb::Kind::Image);
  const auto caps = project_set(pairs.captions, model.text_proj, emb::Kind::Text);
  eval::GoldMap identity;
  for (const auto& id : imgs.ids()) identity[id] = {id};
  const auto s = emb::cosine_matrix(imgs, caps);
  return 0.5 * (eval::recall_at_k(s, 1, eval::Direction::ImageToText, identity) +
                eval::recall_at_k(s, 1, eval::Direction::TextToImage, identity));
}

/// K nearest images per item by cosine of the base image embeddings.
inline std::vector<std::vector<std::size_t>> image_neighbors(const Matrix& images, std::size_t k) {
  emb::EmbeddingSet set(emb::Kind::Image, static_cast<std::size_t>(images.cols()));
  char buf[32];
  for (Eigen::Index i = 0; i < images.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%010lld", static_cast<long long>(i));
    set.add(buf, std::span<const double>(images.row(i).data(), static_cast<std::size_t>(images.cols())));
  }
  const auto table = emb::top_k_neighbors(set, k);
  std::vector<std::vector<std::size_t>> out(table.lists.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    for (const auto& nb : table.lists[i]) out[i].push_back(nb.index);
  return out;
}

inline std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

/// Trains from `init` (or a seeded random model). Each epoch reshuffles the
/// items and redraws negative captions and neighbor images.
inline TrainResult train(const PairedData& data, const TrainConfig& config,
                         const PairedData* validation = nullptr,
                         std::optional<ProjectionModel> init = std::nullopt) {
  config.validate();
  if (data.size() == 0) throw DataError("empty training set");
  if (data.captions.rows() != data.images.rows() || data.captions.cols() != data.images.cols())
    throw DataError("training images and captions are not aligned");

  PairedData local;
  const PairedData* train_data = &data;
  if (config.use_neg_images && data.neighbors.empty()) {
    local = data;
    local.neighbors = image_neighbors(data.images, config.neighbor_k);
    train_data = &local;
  }

  const std::size_t per_epoch = batches_per_epoch(data.size(), config.batch_size);
  const std::size_t total = config.total_steps ? config.total_steps : config.epochs * per_epoch;
  if (config.warmup_steps > total) throw UsageError("warmup steps exceed total steps");

  TrainResult result;
  ProjectionModel model =
      init ? *init : ProjectionModel::random(data.dim(), config.d_out, derive_seed(config.seed, 0));
  if (model.d_in() != data.dim()) throw DataError("model input dim does not match data");
  AdamW opt(model);
  result.model = model;
  const BatchOptions opts{config.use_neg_captions, config.use_neg_images};

  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs && step < total; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(derive_seed(config.seed, 1), epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(epoch_seed);
    fisher_yates(std::span(order), rng);
    for (std::size_t b = 0; b < per_epoch && step < total; ++b, ++step) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(b * config.batch_size);
      const auto last = order.begin() + static_cast<std::ptrdiff_t>(
                                            std::min(data.size(), (b + 1) * config.batch_size));
      const auto batch = assemble_batch(*train_data, std::vector<std::size_t>(first, last), opts, epoch_seed);
      LossValue value;
      const auto grad = loss_gradient(model, batch, &value);
      const double lr = learning_rate_at(config.learning_rate, config.warmup_steps, total, step);
      opt.step(model, grad, lr, config);
      if (!model.finite())
        throw NumericError("non-finite parameter after step " + std::to_string(step));
      result.trace.push_back({step, lr, value.loss});
    }
    if (validation) {
      const double r1 = paired_recall_at_1(model, *validation);
      result.trace.back().val_r1 = r1;
      if (std::isnan(result.best_val_r1) || r1 > result.best_val_r1) {
        result.best_val_r1 = r1;
        result.best_epoch = epoch;
        result.model = model;
      }
    }
  }
  result.steps = step;
  result.final_model = model;
  if (!validation) result.model = model;
  return result;
}

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "step,lr,loss,val_r1\n";
  char buf[128];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,", r.step, r.lr, r.loss);
    out += buf;
    if (!std::isnan(r.val_r1)) {
      std::snprintf(buf, sizeof buf, "%.6f", r.val_r1);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//     "AROC" | u32 version=1 | u32 d_in | u32 d_out | u64 step | f64 logit_scale
//     | f64 image_proj[d_in*d_out] | f64 text_proj[d_in*d_out]
//     | u32 config_len | config JSON (UTF-8)

struct Checkpoint {
  ProjectionModel model;
  TrainConfig config;
  std::uint64_t step = 0;
};

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string buf = "AROC";
  emb::detail::put_le<std::uint32_t>(buf, 1);
  emb::detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.model.d_in()));
  emb::detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(ck.model.d_out()));
  emb::detail::put_le<std::uint64_t>(buf, ck.step);
  auto put_f64 = [&](double v) { emb::detail::put_le<std::uint64_t>(buf, std::bit_cast<std::uint64_t>(v)); };
  put_f64(ck.model.logit_scale);
  for (Eigen::Index i = 0; i < ck.model.image_proj.size(); ++i) put_f64(ck.model.image_proj.data()[i]);
  for (Eigen::Index i = 0; i < ck.model.text_proj.size(); ++i) put_f64(ck.model.text_proj.data()[i]);
  const auto cfg = to_json(ck.config).dump();
  emb::detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.size()));
  buf += cfg;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("write failed for checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = emb::detail::read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t off = 0;
  auto need = [&](std::size_t n) {
    if (bytes.size() - off < n) throw DataError("checkpoint " + path + " is truncated");
  };
  need(4);
  if (bytes.compare(0, 4, "AROC") != 0) throw DataError("checkpoint " + path + ": bad magic");
  off = 4;
  need(4 + 4 + 4 + 8 + 8);
  if (emb::detail::get_le<std::uint32_t>(p + off) != 1) throw DataError("checkpoint: unsupported version");
  const auto d_in = emb::detail::get_le<std::uint32_t>(p + off + 4);
  const auto d_out = emb::detail::get_le<std::uint32_t>(p + off + 8);
  Checkpoint ck;
  ck.step = emb::detail::get_le<std::uint64_t>(p + off + 12);
  off += 20;
  auto get_f64 = [&] {
    need(8);
    const double v = std::bit_cast<double>(emb::detail::get_le<std::uint64_t>(p + off));
    off += 8;
    return v;
  };
  ck.model.logit_scale = get_f64();
  ck.model.image_proj.resize(d_in, d_out);
  ck.model.text_proj.resize(d_in, d_out);
  for (Eigen::Index i = 0; i < ck.model.image_proj.size(); ++i) ck.model.image_proj.data()[i] = get_f64();
  for (Eigen::Index i = 0; i < ck.model.text_proj.size(); ++i) ck.model.text_proj.data()[i] = get_f64();
  need(4);
  const auto len = emb::detail::get_le<std::uint32_t>(p + off);
  off += 4;
  need(len);
  try {
    ck.config = train_config_from_json(nlohmann::json::parse(bytes.substr(off, len)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  if (off + len != bytes.size()) throw DataError("checkpoint " + path + " has trailing bytes");
  return ck;
}

}  // namespace aro::negclip
