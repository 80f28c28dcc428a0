// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mxsim/config.hpp"
#include "mxsim/hadamard.hpp"
#include "mxsim/qgrad.hpp"
#include "mxsim/qlinear.hpp"
#include "mxsim/trainer.hpp"

namespace mxsim {

/// One point of the technique grid, in the vocabulary of the results tables.
struct QuantConfig {
  std::string scale_format = "E8M0";
  std::size_t block_size = 32;
  DzKind max_approx = DzKind::STE;
  QGradKind step_grad = QGradKind::STE;   // "Quant grad"
  HadamardMode hadamard = HadamardMode::None;
  QGradKind scale_grad = QGradKind::STE;  // "Scale grad", the q'(s) relaxation
  SrPolicy sr = SrPolicy::None;
  std::string optimizer = "Adam";
  bool loss_scaling = false;
  RoundingKind scale_rounding = RoundingKind::TiesToEven;  // "Round mode"
  bool tensor_scaling = false;
  std::optional<TensorScaleGradMode> tensor_grad;  // empty is N/A (no tensor scaling)
  ZeroScaleMode nan_mode = ZeroScaleMode::NearestSubnormal;

  /// Compact, unique, human-readable key.
  std::string id() const;
  bool operator==(const QuantConfig&) const = default;
};

/// Overhead points of each technique.
struct ComplexityWeights {
  double smoothing = 3.0;          // Max Approx other than STE
  double tensor_scale_grad = 3.0;  // tensor-scale gradient estimate active
  double step_gradient = 2.0;      // Quant grad other than STE
  double hadamard = 1.0;
  double quantized_gradient = 1.5;  // Scale grad other than STE
  double sr = 0.5;
  double tensor_scaling = 0.5;
  double loss_scaling = 0.5;
  double spam_optimizer = 0.5;
  double scale_sr = 0.25;  // stochastic scale rounding
};

/// Omega(c): sum of the weights of the techniques c uses.
double complexity_points(const QuantConfig& c, const ComplexityWeights& w = {});

enum class ScoreRule {
  Published,     // G / max(1, Omega) for G >= 0, G * max(1, Omega) otherwise
  OnePlusOmega,  // G / (1 + Omega)
};

std::string_view to_string(ScoreRule rule);
ScoreRule parse_score_rule(std::string_view name);

/// G = (M_ref - M_c) / M_ref. Throws std::invalid_argument when M_ref <= 0.
double relative_gain(double m_ref, double m_c);
double score(double m_ref, double m_c, double omega, ScoreRule rule = ScoreRule::Published);

struct ScoreReport {
  std::string config_id;
  double m_ref = 0.0;
  double m_c = 0.0;
  double gain = 0.0;
  double omega = 0.0;
  double score = 0.0;
};

ScoreReport make_report(const QuantConfig& c, double m_ref, double m_c,
                        ScoreRule rule = ScoreRule::Published);

/// Reference metric for a dataset: the smallest validation loss among its
/// baseline (unquantized) runs.
double reference_loss(const std::vector<double>& baseline_val_losses);

struct ParetoPoint {
  double omega = 0.0;
  double score = 0.0;
  std::size_t index = 0;  // caller's record index
};

/// Points not dominated by another with omega' <= omega and score' >= score,
/// one of them strict. Sorted by omega, then score descending.
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

/// Search values per technique. Block size follows the scale format when
/// block_sizes is empty (32 for E8M0, 16 otherwise).
struct SweepGrid {
  std::vector<std::string> scale_formats = {"E8M0", "E4M3"};
  std::vector<std::size_t> block_sizes;
  std::vector<DzKind> max_approx = {DzKind::STE, DzKind::Softmax, DzKind::Hybrid, DzKind::Absmax};
  std::vector<RoundingKind> scale_rounding = {RoundingKind::TiesToEven, RoundingKind::TowardPositive,
                                              RoundingKind::Stochastic};
  std::vector<QGradKind> step_grad = {QGradKind::STE, QGradKind::BaselinePower, QGradKind::Spline};
  std::vector<QGradKind> scale_grad = {QGradKind::STE, QGradKind::BaselinePower, QGradKind::Spline};
  std::vector<TensorScaleGradMode> tensor_grad = {TensorScaleGradMode::Ignore, TensorScaleGradMode::Absmax,
                                                  TensorScaleGradMode::STE};
  std::vector<std::string> optimizers = {"Adam", "StableSPAM"};
  std::vector<bool> loss_scaling = {true, false};
  std::vector<bool> tensor_scaling = {true, false};
  std::vector<SrPolicy> sr = {SrPolicy::None, SrPolicy::AllActivations, SrPolicy::BackwardActivations};
  std::vector<HadamardMode> hadamard = {HadamardMode::None, HadamardMode::All, HadamardMode::BackwardOnly};
  std::vector<ZeroScaleMode> nan_mode = {ZeroScaleMode::NearestSubnormal};

  /// Size of the plain Cartesian product.
  std::size_t raw_size() const;
};

struct Enumeration {
  std::vector<QuantConfig> configs;
  std::size_t raw = 0;      // Cartesian product size
  std::size_t dropped = 0;  // combinations removed by the conditional constraints
};

/// Cartesian product of the grid. Without tensor scaling the tensor-scale
/// gradient is N/A, so only one of its values survives.
Enumeration enumerate_configs(const SweepGrid& grid);

/// Layer and training settings implied by a config, on top of `base`.
TrainConfig to_train_config(const QuantConfig& c, const TrainConfig& base);

/// Parses a results-table cell set (column name -> cell). Accepts the table
/// spellings: "N/A", "None_exact", "all_exact", "backward_exact",
/// "IntelFP4_exact", "all_activation_exact", block sizes such as "16.000".
QuantConfig config_from_table(const std::map<std::string, std::string>& row);

// Table spellings used in result CSVs.
std::string hadamard_cell(HadamardMode m);
std::string sr_cell(SrPolicy p);
std::string tensor_grad_cell(const std::optional<TensorScaleGradMode>& t);

/// Column names of the results CSV, in order.
const std::vector<std::string>& result_columns();

struct ResultRow {
  std::string dataset;
  QuantConfig config;
  double val_loss = 0.0;
  double train_loss = 0.0;
  double omega = 0.0;
  double score = 0.0;
  bool diverged = false;
};

/// RFC 4180 field quoting.
std::string csv_field(std::string_view s);
/// Splits one CSV line; handles quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

void write_result_header(std::ostream& os);
void write_result_row(std::ostream& os, const ResultRow& r);
/// Reads a results CSV (header required) back into rows.
std::vector<ResultRow> read_results(std::istream& in);

/// Serializes writes from concurrent runs into one stream.
class CsvAppender {
 public:
  explicit CsvAppender(std::ostream& os) : os_(os) {}
  void append(const ResultRow& r);

 private:
  std::mutex mu_;
  std::ostream& os_;
};

/// Settings a config file may carry besides the technique grid.
struct SweepFile {
  SweepGrid grid;
  TaskSpec task;
  TrainConfig train;
  std::string dataset_name;
  /// Reference loss for scoring; when absent the runner trains a baseline.
  std::optional<double> reference_loss;
};

/// Reads the grid and training keys. Technique keys take one value or a
/// comma-separated list using the table spellings.
SweepFile parse_sweep_file(const KeyValueFile& file);

struct RunOutcome {
  QuantConfig config;
  std::optional<RunRecord> record;
  std::string error;  // set when the run could not start (e.g. unsupported optimizer)
};

/// Runs each config on the dataset with up to `jobs` concurrent runs, each
/// with its own seed-derived state. Rows are appended as runs finish; the
/// returned outcomes are in config order.
std::vector<RunOutcome> run_sweep(const std::vector<QuantConfig>& configs, const Dataset& data,
                                  const TrainConfig& base, unsigned jobs,
                                  const std::function<void(const RunOutcome&)>& on_done = {});

/// Reconstruction-error grid over formats, block sizes, input magnitudes and
/// Z functions (beta = +infinity means absmax).
struct ReconSpec {
  std::vector<std::string> formats = {"E4M3", "E8M0", "UE5M3"};
  std::vector<std::size_t> block_sizes = {2, 4, 8, 16, 32, 64, 128};
  std::vector<double> scales;  // default: 10^-30 ... 10^30
  std::vector<double> betas;   // default: 1 ... 160 and +infinity
  std::size_t rows = 64;
  std::size_t cols = 256;
  std::uint64_t seed = 0;
  bool tensor_scaling = false;
  unsigned threads = 1;

  static std::vector<double> default_scales();
  static std::vector<double> default_betas();
};

struct ReconRow {
  std::string format;
  std::size_t block_size = 0;
  double scale = 1.0;
  double beta = 0.0;
  double mean_rel_err = 0.0;
  double median_rel_err = 0.0;
};

/// Mean and median of |x - f(x)| / |x| over the nonzero entries of x.
std::pair<double, double> relative_error_stats(const Matrix& x, const Matrix& fx);

std::vector<ReconRow> recon_error_experiment(const ReconSpec& spec);
/// format,l,scale,beta,mean_rel_err,median_rel_err
void write_recon_csv(std::ostream& os, const std::vector<ReconRow>& rows);

/// Blocks whose values are E2M1 grid points times a power of two, with one
/// element per block at the block maximum; MX quantization reproduces them
/// exactly for any scale format that holds the powers used.
Matrix fixed_point_tensor(std::size_t rows, std::size_t cols, std::size_t block, std::uint64_t seed);

}  // namespace mxsim
