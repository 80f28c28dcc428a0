// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mxsim/matrix.hpp"
#include "mxsim/minifloat.hpp"
#include "mxsim/mx_quant.hpp"

namespace mxsim {

enum class QGradKind { STE, BaselinePower, Spline, Sigmoid };

/// Relaxation of a rounding step Q used in the backward pass.
struct QGradEstimator {
  QGradKind kind = QGradKind::STE;
  int w = 5;                  // BaselinePower exponent
  double max_slope = 1e3;     // BaselinePower clamp at the interval midpoint
  double clip_min = 0.05;     // Spline lower bound on the slope
  double temperature = 1.0;   // Sigmoid T
};

std::string_view to_string(QGradKind kind);
/// "STE", "baseline", "spline", "sigmoid".
QGradKind parse_qgrad_kind(std::string_view name);

/// Piecewise-linear spline through the round-to-nearest decision boundaries
/// of a format: knots at midpoints between neighbours, knot value equal to
/// the ties-to-even result there, plus the two grid ends. It passes through
/// every grid value.
double q_spline(double x, const FloatFormat& format);
/// Max(segment slope, clip_min); slope 0 outside the grid before clipping.
double q_spline_grad(double x, const FloatFormat& format, double clip_min);

/// Power relaxation (delta/2)(1 + sign(2t/delta - 1)|2t/delta - 1|^(1/w)) on
/// the grid interval containing x, t measured from the interval start.
double q_baseline(double x, const FloatFormat& format, int w);
double q_baseline_grad(double x, const FloatFormat& format, int w, double max_slope = 1e3);

/// v_i + sigmoid((x - c_i) gamma_i / T) Delta_i on I_i = (v_i, v_{i+1}], gamma_i = 12 / Delta_i.
double q_sigmoid(double x, const FloatFormat& format, double temperature);
double q_sigmoid_grad(double x, const FloatFormat& format, double temperature);

/// Surrogate value and slope of Q for one estimator over one format. STE
/// keeps the hard ties-to-even value and reports slope 1. Precomputes the
/// spline table once.
class QuantizerRelaxation {
 public:
  QuantizerRelaxation(QGradEstimator estimator, const FloatFormat& format);

  double value(double x) const;
  double slope(double x) const;
  const QGradEstimator& estimator() const { return est_; }
  const FloatFormat& format() const { return *format_; }

 private:
  QGradEstimator est_;
  const FloatFormat* format_;
  std::vector<double> knots_;
  std::vector<double> knot_values_;
};

/// Gradient source for dZ/dX (and for ds/dX through it).
enum class DzKind {
  STE,      // the bracketed scale term of the block gradient is passed through
  Absmax,   // one-hot sign at the argmax
  Softmax,  // softmax(beta |X|) sign(X); forward Z is LogSumExp
  Hybrid,   // forward absmax, backward softmax derivative
};

std::string_view to_string(DzKind kind);
/// "STE", "absmax", "softsoftmax" (Softmax), "hardsoftmax" (Hybrid).
DzKind parse_dz_kind(std::string_view name);

/// How the STE row of the block-scale gradient is read.
enum class SteScaleReading {
  PassThrough,  // the scale term contributes nothing: df/dX = Q'
  UnitTerm,     // bracket and ds/dX both set to 1: df/dX = Q' + 1
};

struct ScaleGradConfig {
  DzKind dz = DzKind::STE;
  double beta = 40.0;
  QGradEstimator q_grad;  // relaxation of the scale quantizer q
  /// When set, q'(s) uses q_grad only for s below the threshold and 1 otherwise.
  std::optional<double> selective_threshold;
  SteScaleReading ste_reading = SteScaleReading::PassThrough;

  /// Forward Z implied by dz: LogSumExp for Softmax, absmax otherwise.
  ZFunction forward_z() const;
};

enum class TensorScaleGradMode { Ignore, Absmax, STE };

std::string_view to_string(TensorScaleGradMode mode);
/// "ignore", "absmax", "STE".
TensorScaleGradMode parse_tensor_scale_grad(std::string_view name);

/// Elementwise applies the per-element partial derivatives as a mask, as in
/// the layer backward formula. Exact contracts the full block Jacobian
/// (including the cross terms through s and g); used for gradient checks.
enum class GradAssembly { Elementwise, Exact };

/// dZ/dX for one block. Absmax picks the first index of the largest |x|.
/// STE returns all zeros.
std::vector<double> dZ(std::span<const double> block, DzKind kind, double beta = 40.0);

/// ds/dX = -(FP4_max / Z^2) dZ/dX; zero vector when Z is 0.
std::vector<double> ds_dX(double z, std::span<const double> dz);

/// Q'(s_q x) + ds (q'/s_q)(x Q'(s_q x) - Q(s_q x)/s_q).
double assemble_df_dX(double x, double s_q, double q_value, double q_slope, double scale_slope,
                      double ds);

/// df/dU + dg (f(U) - U df/dU).
double assemble_dh_dX(double df_dU, double dg, double f_U, double u);

/// True iff s < threshold.
bool selective_scale_gate(double s, double threshold);

/// Everything needed to differentiate one quantization site.
struct QuantGradConfig {
  BlockSpec spec;
  bool tensor_scaling = false;
  QGradEstimator elem;
  ScaleGradConfig scale;
  TensorScaleGradMode tensor_grad = TensorScaleGradMode::Ignore;
  GradAssembly assembly = GradAssembly::Elementwise;
};

/// Rescale constant the forward pass uses for this site (1 without it).
double scale_multiplier_for(const QuantGradConfig& cfg);

/// Fully relaxed forward: rows of x are split into blocks, the scale
/// quantizer and element quantizer are replaced by their relaxations
/// (STE keeps the hard function). Used to validate gradients.
Matrix surrogate_quantize(const Matrix& x, const QuantGradConfig& cfg);

/// Vector-Jacobian product of the quantizer at x: given dL/dh returns dL/dx.
/// When `hard_scales` is provided (stored scales of the forward tensor) the
/// scale values come from it; otherwise the relaxed scale quantizer is used,
/// matching surrogate_quantize.
Matrix quantizer_vjp(const Matrix& x, const Matrix& grad_out, const QuantGradConfig& cfg,
                     const QuantizedTensor* hard_scales = nullptr);

}  // namespace mxsim
