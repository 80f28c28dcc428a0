// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mxsim/matrix.hpp"
#include "mxsim/qlinear.hpp"

namespace mxsim {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments of one parameter tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// Bias-corrected Adam update of `params` at step t (1-based).
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               long t, const AdamHyper& hp);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual std::string_view name() const = 0;
  /// grads[i] belongs to *params[i]; shapes must match.
  virtual void step(std::span<Matrix* const> params, std::span<const Matrix> grads) = 0;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(AdamHyper hp) : hp_(hp) {}
  std::string_view name() const override { return "Adam"; }
  void step(std::span<Matrix* const> params, std::span<const Matrix> grads) override;
  long steps() const { return t_; }

 private:
  AdamHyper hp_;
  long t_ = 0;
  std::vector<AdamMoments> state_;
};

/// "Adam" only; other names (StableSPAM included) throw std::invalid_argument.
std::unique_ptr<Optimizer> make_optimizer(std::string_view name, const AdamHyper& hp);

/// Dynamic loss scaling: halve on a non-finite step, double after
/// growth_interval consecutive finite steps.
struct LossScaler {
  double scale = 65536.0;
  long growth_interval = 2000;
  double min_scale = 1.0;
  long good_steps = 0;

  /// Returns whether the step may be applied.
  bool update(bool grads_finite);
};

struct Dataset {
  Matrix x;
  Matrix y;         // regression targets, or one-hot rows when classes > 0
  int classes = 0;  // 0 for regression

  std::size_t size() const { return x.rows(); }
  bool classification() const { return classes > 0; }
};

struct RegressionSpec {
  std::size_t samples = 5000;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
};

/// X and w_true iid N(0,1), y = X w_true.
Dataset gen_gaussian_regression(const RegressionSpec& spec, std::vector<double>* w_true = nullptr);

struct BlobSpec {
  std::size_t samples = 2000;
  std::size_t dim = 16;
  int classes = 2;
  double separation = 5.0;  // distance between class means, in units of the noise sigma
  std::uint64_t seed = 0;
};

/// Gaussian blobs with unit noise; class means are pairwise `separation` apart.
Dataset gen_synthetic_classification(const BlobSpec& spec);

/// IDX image file (magic 0x00000803) scaled to [0, 1], one flattened image per row.
Matrix load_idx_images(const std::string& path);
/// IDX label file (magic 0x00000801).
std::vector<int> load_idx_labels(const std::string& path);
/// Images plus labels as a 10-class dataset.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

enum class TaskKind { GaussianRegression, SyntheticClassification, MnistIdx };

std::string_view to_string(TaskKind kind);
/// "gaussian_regression", "blobs", "mnist".
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::GaussianRegression;
  std::size_t samples = 5000;
  std::size_t dim = 64;
  int classes = 2;
  double separation = 5.0;
  std::uint64_t seed = 0;
  std::string images_path;  // MnistIdx only
  std::string labels_path;
};

Dataset make_dataset(const TaskSpec& task);

/// Rows [0, n - n_val) and [n - n_val, n) with n_val = round(n * fraction).
std::pair<Dataset, Dataset> split_tail(const Dataset& d, double fraction);

struct ModelSpec {
  std::vector<std::size_t> hidden = {64, 64};  // one quantized layer per entry
  bool relu = true;
};

struct TrainConfig {
  QLinearConfig layer;
  ModelSpec model;
  AdamHyper adam;
  std::string optimizer = "Adam";
  std::size_t batch_size = 64;
  int epochs = 20;
  bool loss_scaling = false;
  LossScaler scaler;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct StepStats {
  double loss = 0.0;
  bool applied = false;
  double loss_scale = 1.0;
};

/// Quantized linear stack plus a dense head, trained in place.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, std::size_t input_dim, std::size_t output_dim, bool classification);

  /// One optimizer step on a batch.
  StepStats step(const Matrix& x, const Matrix& target, std::uint64_t step_seed);
  /// Loss over a dataset, forward only.
  double evaluate(const Dataset& d, std::uint64_t seed) const;
  Matrix predict(const Matrix& x, std::uint64_t seed) const;

  /// Quantized layer weights, then the head weight and head bias (1 x out).
  const std::vector<Matrix>& parameters() const { return params_; }
  std::vector<Matrix>& parameters() { return params_; }
  const LossScaler& scaler() const { return scaler_; }
  long skipped_steps() const { return skipped_; }

 private:
  double loss_and_grad(const Matrix& y, const Matrix& target, Matrix* dy) const;

  TrainConfig cfg_;
  bool classification_;
  std::vector<Matrix> params_;
  std::unique_ptr<Optimizer> opt_;
  LossScaler scaler_;
  long skipped_ = 0;
};

struct RunRecord {
  std::vector<double> train_loss;  // per epoch, full training split
  std::vector<double> val_loss;
  double initial_loss = 0.0;
  bool diverged = false;
  long steps = 0;
  long skipped_steps = 0;
  double final_loss_scale = 1.0;
  double seconds = 0.0;

  double final_train() const { return train_loss.empty() ? initial_loss : train_loss.back(); }
  double final_val() const { return val_loss.empty() ? initial_loss : val_loss.back(); }
};

/// Trains on the head of `data` and validates on its tail. Divergence (loss
/// non-finite, or above 10x the initial loss for 3 epochs in a row) stops
/// the run early and is recorded, not thrown.
/// Called after every optimizer step with the trainer and the batch it saw.
using StepObserver = std::function<void(const Trainer&, const Matrix& x, const Matrix& y, const StepStats&)>;

RunRecord train(const Dataset& data, const TrainConfig& cfg, const StepObserver& observer = {});

/// epoch,train_loss,val_loss
void write_history_csv(std::ostream& os, const RunRecord& rec);

/// Nearest bfloat16 value (ties to even), the granularity of logged losses.
double round_bfloat16(double v);

}  // namespace mxsim
