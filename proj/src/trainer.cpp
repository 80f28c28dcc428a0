// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "mxsim/random.hpp"

namespace mxsim {

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& mo, long t,
               const AdamHyper& hp) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (mo.m.size() != params.size()) {
    mo.m.assign(params.size(), 0.0);
    mo.v.assign(params.size(), 0.0);
  }
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    mo.m[i] = hp.beta1 * mo.m[i] + (1.0 - hp.beta1) * grads[i];
    mo.v[i] = hp.beta2 * mo.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    const double mhat = mo.m[i] / c1;
    const double vhat = mo.v[i] / c2;
    params[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
  }
}

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Adam: parameter count mismatch");
  if (state_.size() != params.size()) state_.resize(params.size());
  ++t_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_step(params[i]->flat(), grads[i].flat(), state_[i], t_, hp_);
  }
}

std::unique_ptr<Optimizer> make_optimizer(std::string_view name, const AdamHyper& hp) {
  if (name == "Adam") return std::make_unique<Adam>(hp);
  throw std::invalid_argument(fmt::format(
      "optimizer '{}' is not available; this build ships Adam only", name));
}

bool LossScaler::update(bool grads_finite) {
  if (!grads_finite) {
    scale = std::max(min_scale, scale * 0.5);
    good_steps = 0;
    return false;
  }
  if (++good_steps >= growth_interval) {
    scale *= 2.0;
    good_steps = 0;
  }
  return true;
}

Dataset gen_gaussian_regression(const RegressionSpec& spec, std::vector<double>* w_true) {
  if (spec.samples == 0 || spec.dim == 0) throw std::invalid_argument("regression: empty shape");
  RandomStream rng(derive_seed({spec.seed, 0x7265}));
  std::vector<double> w(spec.dim);
  for (auto& v : w) v = rng.normal();
  Dataset d;
  d.x = Matrix(spec.samples, spec.dim);
  for (auto& v : d.x.flat()) v = rng.normal();
  d.y = Matrix(spec.samples, 1);
  for (std::size_t r = 0; r < spec.samples; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < spec.dim; ++c) s += d.x(r, c) * w[c];
    d.y(r, 0) = s;
  }
  if (w_true) *w_true = std::move(w);
  return d;
}

Dataset gen_synthetic_classification(const BlobSpec& spec) {
  if (spec.classes < 2 || static_cast<std::size_t>(spec.classes) > spec.dim || spec.samples == 0) {
    throw std::invalid_argument("blobs: need 2 <= classes <= dim and samples > 0");
  }
  RandomStream rng(derive_seed({spec.seed, 0x626c}));
  const double offset = spec.separation / std::sqrt(2.0);
  Dataset d;
  d.classes = spec.classes;
  d.x = Matrix(spec.samples, spec.dim);
  d.y = Matrix(spec.samples, static_cast<std::size_t>(spec.classes));
  for (std::size_t r = 0; r < spec.samples; ++r) {
    const auto k = static_cast<std::size_t>(rng.uniform() * spec.classes);
    for (std::size_t c = 0; c < spec.dim; ++c) d.x(r, c) = rng.normal() + (c == k ? offset : 0.0);
    d.y(r, k) = 1.0;
  }
  return d;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace

Matrix load_idx_images(const std::string& path) {
  const auto b = read_file(path);
  if (b.size() < 16) throw std::runtime_error(fmt::format("{}: too short for an IDX image header", path));
  if (be32(b, 0) != 0x00000803) {
    throw std::runtime_error(fmt::format("{}: bad magic {:#010x}, expected 0x00000803", path, be32(b, 0)));
  }
  const std::size_t n = be32(b, 4), rows = be32(b, 8), cols = be32(b, 12);
  if (rows == 0 || cols == 0) throw std::runtime_error(fmt::format("{}: zero image size", path));
  if (b.size() != 16 + n * rows * cols) {
    throw std::runtime_error(fmt::format("{}: header says {}x{}x{} but payload is {} bytes", path, n,
                                         rows, cols, b.size() - 16));
  }
  Matrix m(n, rows * cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.flat()[i] = b[16 + i] / 255.0;
  return m;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const auto b = read_file(path);
  if (b.size() < 8) throw std::runtime_error(fmt::format("{}: too short for an IDX label header", path));
  if (be32(b, 0) != 0x00000801) {
    throw std::runtime_error(fmt::format("{}: bad magic {:#010x}, expected 0x00000801", path, be32(b, 0)));
  }
  const std::size_t n = be32(b, 4);
  if (b.size() != 8 + n) {
    throw std::runtime_error(fmt::format("{}: header says {} labels but payload is {} bytes", path, n,
                                         b.size() - 8));
  }
  return {b.begin() + 8, b.end()};
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  Dataset d;
  d.x = load_idx_images(images_path);
  const auto labels = load_idx_labels(labels_path);
  if (labels.size() != d.x.rows()) {
    throw std::runtime_error(fmt::format("{} images but {} labels", d.x.rows(), labels.size()));
  }
  d.classes = 10;
  d.y = Matrix(labels.size(), 10);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 9) throw std::runtime_error(fmt::format("label {} out of range", labels[i]));
    d.y(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return d;
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::GaussianRegression: return "gaussian_regression";
    case TaskKind::SyntheticClassification: return "blobs";
    case TaskKind::MnistIdx: return "mnist";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "gaussian_regression") return TaskKind::GaussianRegression;
  if (name == "blobs") return TaskKind::SyntheticClassification;
  if (name == "mnist") return TaskKind::MnistIdx;
  throw std::invalid_argument(
      fmt::format("unknown task '{}' (valid: gaussian_regression, blobs, mnist)", name));
}

Dataset make_dataset(const TaskSpec& task) {
  switch (task.kind) {
    case TaskKind::GaussianRegression:
      return gen_gaussian_regression({task.samples, task.dim, task.seed});
    case TaskKind::SyntheticClassification:
      return gen_synthetic_classification({task.samples, task.dim, task.classes, task.separation, task.seed});
    case TaskKind::MnistIdx:
      return load_mnist_idx(task.images_path, task.labels_path);
  }
  throw std::logic_error("make_dataset: bad task kind");
}

namespace {

Matrix take_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  return Matrix(end - begin, m.cols(),
                std::vector<double>(m.flat().begin() + static_cast<std::ptrdiff_t>(begin * m.cols()),
                                    m.flat().begin() + static_cast<std::ptrdiff_t>(end * m.cols())));
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split_tail(const Dataset& d, double fraction) {
  const std::size_t n = d.size();
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  const std::size_t cut = n - std::min(n_val, n);
  Dataset a{take_rows(d.x, 0, cut), take_rows(d.y, 0, cut), d.classes};
  Dataset b{take_rows(d.x, cut, n), take_rows(d.y, cut, n), d.classes};
  return {std::move(a), std::move(b)};
}

Trainer::Trainer(const TrainConfig& cfg, std::size_t input_dim, std::size_t output_dim,
                 bool classification)
    : cfg_(cfg), classification_(classification), opt_(make_optimizer(cfg.optimizer, cfg.adam)),
      scaler_(cfg.scaler) {
  if (!cfg.loss_scaling) scaler_.scale = 1.0;
  RandomStream rng(derive_seed({cfg.seed, 0x696e6974}));
  const double gain = cfg.model.relu ? 2.0 : 1.0;
  std::size_t fan_in = input_dim;
  auto init = [&](std::size_t out, std::size_t in) {
    Matrix w(out, in);
    const double sd = std::sqrt(gain / static_cast<double>(in));
    for (auto& v : w.flat()) v = sd * rng.normal();
    return w;
  };
  for (std::size_t h : cfg.model.hidden) {
    params_.push_back(init(h, fan_in));
    fan_in = h;
  }
  params_.push_back(init(output_dim, fan_in));
  params_.emplace_back(1, output_dim);
}

double Trainer::loss_and_grad(const Matrix& y, const Matrix& t, Matrix* dy) const {
  const std::size_t b = y.rows(), k = y.cols();
  if (dy) *dy = Matrix(b, k);
  double loss = 0.0;
  if (!classification_) {
    const double denom = static_cast<double>(b * k);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = y.flat()[i] - t.flat()[i];
      loss += e * e;
      if (dy) dy->flat()[i] = 2.0 * e / denom;
    }
    return loss / denom;
  }
  for (std::size_t r = 0; r < b; ++r) {
    const auto row = y.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < k; ++c) {
      loss -= t(r, c) * (row[c] - lz);
      if (dy) (*dy)(r, c) = (std::exp(row[c] - lz) - t(r, c)) / static_cast<double>(b);
    }
  }
  return loss / static_cast<double>(b);
}

namespace {

Matrix head_forward(const Matrix& h, const Matrix& w, const Matrix& bias) {
  Matrix y = matmul_nt(h, w);
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += bias(0, c);
  return y;
}

void relu_inplace(Matrix& m) {
  for (auto& v : m.flat()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

Matrix Trainer::predict(const Matrix& x, std::uint64_t seed) const {
  const std::size_t layers = cfg_.model.hidden.size();
  Matrix h = x;
  for (std::size_t k = 0; k < layers; ++k) {
    h = qlinear_forward(h, params_[k], cfg_.layer, derive_seed({seed, k})).y;
    if (cfg_.model.relu) relu_inplace(h);
  }
  return head_forward(h, params_[layers], params_[layers + 1]);
}

double Trainer::evaluate(const Dataset& d, std::uint64_t seed) const {
  return loss_and_grad(predict(d.x, seed), d.y, nullptr);
}

StepStats Trainer::step(const Matrix& x, const Matrix& target, std::uint64_t step_seed) {
  const std::size_t layers = cfg_.model.hidden.size();
  std::vector<Matrix> acts{x};
  std::vector<LayerContext> ctx;
  for (std::size_t k = 0; k < layers; ++k) {
    auto fr = qlinear_forward(acts.back(), params_[k], cfg_.layer, derive_seed({step_seed, k}));
    if (cfg_.model.relu) relu_inplace(fr.y);
    acts.push_back(std::move(fr.y));
    ctx.push_back(std::move(fr.ctx));
  }
  const Matrix& w_head = params_[layers];
  const Matrix y = head_forward(acts.back(), w_head, params_[layers + 1]);
  Matrix dy;
  StepStats st;
  st.loss = loss_and_grad(y, target, &dy);
  st.loss_scale = scaler_.scale;

  std::vector<Matrix> grads(params_.size());
  bool finite = std::isfinite(st.loss);
  if (finite) {
    for (auto& v : dy.flat()) v *= scaler_.scale;
    grads[layers] = matmul(transpose(dy), acts.back());
    grads[layers + 1] = Matrix(1, dy.cols());
    for (std::size_t r = 0; r < dy.rows(); ++r)
      for (std::size_t c = 0; c < dy.cols(); ++c) grads[layers + 1](0, c) += dy(r, c);
    Matrix g = matmul(dy, w_head);
    for (std::size_t k = layers; k-- > 0;) {
      if (cfg_.model.relu) {
        for (std::size_t i = 0; i < g.size(); ++i)
          if (!(acts[k + 1].flat()[i] > 0.0)) g.flat()[i] = 0.0;
      }
      auto br = qlinear_backward(g, ctx[k], cfg_.layer);
      if (!br.finite) {
        finite = false;
        break;
      }
      grads[k] = std::move(br.gw);
      g = std::move(br.gx);
    }
    for (const auto& gm : grads) finite = finite && all_finite(gm);
  }
  st.applied = cfg_.loss_scaling ? scaler_.update(finite) : finite;
  if (!st.applied) {
    ++skipped_;
    return st;
  }
  const double inv = 1.0 / st.loss_scale;
  if (inv != 1.0) {
    for (auto& gm : grads)
      for (auto& v : gm.flat()) v *= inv;
  }
  std::vector<Matrix*> ptrs;
  for (auto& p : params_) ptrs.push_back(&p);
  opt_->step(ptrs, grads);
  return st;
}

RunRecord train(const Dataset& data, const TrainConfig& cfg, const StepObserver& observer) {
  const auto t0 = std::chrono::steady_clock::now();
  auto [tr, va] = split_tail(data, cfg.val_fraction);
  if (tr.size() == 0) throw std::invalid_argument("train: empty training split");
  Trainer trainer(cfg, tr.x.cols(), tr.y.cols(), tr.classification());
  const std::uint64_t eval_seed = derive_seed({cfg.seed, 0x6576616c});
  RunRecord rec;
  rec.initial_loss = trainer.evaluate(tr, eval_seed);

  std::vector<std::size_t> order(tr.size());
  int above = 0;
  long global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RandomStream rng(derive_seed({cfg.seed, 0x73687566, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(cfg.batch_size, order.size() - s));
      const Matrix xb = gather_rows(tr.x, idx), yb = gather_rows(tr.y, idx);
      const StepStats st = trainer.step(xb, yb, derive_seed({cfg.seed, static_cast<std::uint64_t>(global_step)}));
      if (observer) observer(trainer, xb, yb, st);
      ++global_step;
    }
    const double tl = trainer.evaluate(tr, eval_seed);
    rec.train_loss.push_back(tl);
    rec.val_loss.push_back(va.size() ? trainer.evaluate(va, eval_seed) : tl);
    if (!std::isfinite(tl)) {
      rec.diverged = true;
      break;
    }
    above = tl > 10.0 * rec.initial_loss ? above + 1 : 0;
    if (above >= 3) {
      rec.diverged = true;
      break;
    }
  }
  rec.steps = global_step;
  rec.skipped_steps = trainer.skipped_steps();
  rec.final_loss_scale = trainer.scaler().scale;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void write_history_csv(std::ostream& os, const RunRecord& rec) {
  os << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < rec.train_loss.size(); ++e) {
    os << fmt::format("{},{:.17g},{:.17g}\n", e + 1, rec.train_loss[e], rec.val_loss[e]);
  }
}

double round_bfloat16(double v) {
  if (!std::isfinite(v)) return v;
  const float f = static_cast<float>(v);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  bits += 0x7fffu + ((bits >> 16) & 1u);
  bits &= 0xffff0000u;
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace mxsim
