// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/qgrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace mxsim {

std::string_view to_string(QGradKind kind) {
  switch (kind) {
    case QGradKind::STE: return "STE";
    case QGradKind::BaselinePower: return "baseline";
    case QGradKind::Spline: return "spline";
    case QGradKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

QGradKind parse_qgrad_kind(std::string_view name) {
  if (name == "STE") return QGradKind::STE;
  if (name == "baseline") return QGradKind::BaselinePower;
  if (name == "spline") return QGradKind::Spline;
  if (name == "sigmoid") return QGradKind::Sigmoid;
  throw std::invalid_argument(
      fmt::format("unknown gradient estimator '{}' (valid: STE, baseline, spline, sigmoid)", name));
}

std::string_view to_string(DzKind kind) {
  switch (kind) {
    case DzKind::STE: return "STE";
    case DzKind::Absmax: return "absmax";
    case DzKind::Softmax: return "softsoftmax";
    case DzKind::Hybrid: return "hardsoftmax";
  }
  return "?";
}

DzKind parse_dz_kind(std::string_view name) {
  if (name == "STE") return DzKind::STE;
  if (name == "absmax") return DzKind::Absmax;
  if (name == "softsoftmax" || name == "softmax") return DzKind::Softmax;
  if (name == "hardsoftmax" || name == "hybrid") return DzKind::Hybrid;
  throw std::invalid_argument(fmt::format(
      "unknown max approximation '{}' (valid: STE, absmax, softsoftmax, hardsoftmax)", name));
}

std::string_view to_string(TensorScaleGradMode mode) {
  switch (mode) {
    case TensorScaleGradMode::Ignore: return "ignore";
    case TensorScaleGradMode::Absmax: return "absmax";
    case TensorScaleGradMode::STE: return "STE";
  }
  return "?";
}

TensorScaleGradMode parse_tensor_scale_grad(std::string_view name) {
  if (name == "ignore" || name == "N/A") return TensorScaleGradMode::Ignore;
  if (name == "absmax") return TensorScaleGradMode::Absmax;
  if (name == "STE") return TensorScaleGradMode::STE;
  throw std::invalid_argument(
      fmt::format("unknown tensor scale gradient '{}' (valid: ignore, absmax, STE)", name));
}

ZFunction ScaleGradConfig::forward_z() const {
  if (dz == DzKind::Softmax) return {ZKind::LogSumExp, beta};
  return {ZKind::Absmax, beta};
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct SplineTable {
  std::vector<double> knots;
  std::vector<double> values;
};

SplineTable build_spline(const FloatFormat& f) {
  SplineTable t;
  const auto g = f.grid();
  t.knots.push_back(g.front());
  t.values.push_back(g.front());
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    const double m = 0.5 * (g[i] + g[i + 1]);
    t.knots.push_back(m);
    t.values.push_back(round_value(m, f, RoundingKind::TiesToEven));
  }
  t.knots.push_back(g.back());
  t.values.push_back(g.back());
  return t;
}

// Segment index k with knots[k] <= x < knots[k+1]; npos outside.
constexpr std::size_t kOutside = std::numeric_limits<std::size_t>::max();

std::size_t segment(std::span<const double> knots, double x) {
  if (!(x >= knots.front()) || !(x < knots.back())) return kOutside;
  return static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), x) -
                                  knots.begin()) - 1;
}

double spline_value(std::span<const double> knots, std::span<const double> values, double x) {
  if (x <= knots.front()) return values.front();
  if (x >= knots.back()) return values.back();
  const std::size_t k = segment(knots, x);
  const double a = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
  return a * (x - knots[k]) + values[k];
}

double spline_slope(std::span<const double> knots, std::span<const double> values, double x,
                    double clip_min) {
  const std::size_t k = segment(knots, x);
  double a = 0.0;
  if (k != kOutside) a = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
  return std::max(a, clip_min);
}

}  // namespace

double q_spline(double x, const FloatFormat& format) {
  const auto t = build_spline(format);
  return spline_value(t.knots, t.values, x);
}

double q_spline_grad(double x, const FloatFormat& format, double clip_min) {
  const auto t = build_spline(format);
  return spline_slope(t.knots, t.values, x, clip_min);
}

double q_baseline(double x, const FloatFormat& format, int w) {
  const auto g = format.grid();
  if (x <= g.front()) return g.front();
  if (x >= g.back()) return g.back();
  const std::size_t i = format.lower_index(x);
  const double delta = g[i + 1] - g[i];
  const double u = 2.0 * (x - g[i]) / delta - 1.0;
  const double sgn = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
  return g[i] + 0.5 * delta * (1.0 + sgn * std::pow(std::abs(u), 1.0 / w));
}

double q_baseline_grad(double x, const FloatFormat& format, int w, double max_slope) {
  const auto g = format.grid();
  if (x < g.front() || x >= g.back()) return 0.0;
  const std::size_t i = format.lower_index(x);
  const double delta = g[i + 1] - g[i];
  const double u = std::abs(2.0 * (x - g[i]) / delta - 1.0);
  if (u == 0.0) return max_slope;
  return std::min(max_slope, std::pow(u, 1.0 / w - 1.0) / w);
}

namespace {

// Index i with grid[i] < x <= grid[i+1]; kOutside when x is not inside.
std::size_t sigmoid_interval(std::span<const double> g, double x) {
  if (!(x > g.front()) || x > g.back()) return kOutside;
  return static_cast<std::size_t>(std::lower_bound(g.begin(), g.end(), x) - g.begin()) - 1;
}

}  // namespace

double q_sigmoid(double x, const FloatFormat& format, double temperature) {
  const auto g = format.grid();
  if (x <= g.front()) return g.front();
  if (x > g.back()) return g.back();
  const std::size_t i = sigmoid_interval(g, x);
  const double delta = g[i + 1] - g[i];
  const double c = 0.5 * (g[i] + g[i + 1]);
  const double z = (x - c) * (12.0 / delta) / temperature;
  return g[i] + sigmoid(z) * delta;
}

double q_sigmoid_grad(double x, const FloatFormat& format, double temperature) {
  const auto g = format.grid();
  const std::size_t i = sigmoid_interval(g, x);
  if (i == kOutside) return 0.0;
  const double delta = g[i + 1] - g[i];
  const double c = 0.5 * (g[i] + g[i + 1]);
  const double sg = sigmoid((x - c) * (12.0 / delta) / temperature);
  return 12.0 / temperature * sg * (1.0 - sg);
}

QuantizerRelaxation::QuantizerRelaxation(QGradEstimator estimator, const FloatFormat& format)
    : est_(estimator), format_(&format) {
  if (est_.kind == QGradKind::Spline) {
    auto t = build_spline(format);
    knots_ = std::move(t.knots);
    knot_values_ = std::move(t.values);
  }
  if (est_.kind == QGradKind::BaselinePower && est_.w < 1) {
    throw std::invalid_argument("baseline exponent w must be at least 1");
  }
  if (est_.kind == QGradKind::Sigmoid && !(est_.temperature > 0)) {
    throw std::invalid_argument("sigmoid temperature must be positive");
  }
}

double QuantizerRelaxation::value(double x) const {
  switch (est_.kind) {
    case QGradKind::STE: return round_value(x, *format_, RoundingKind::TiesToEven);
    case QGradKind::BaselinePower: return q_baseline(x, *format_, est_.w);
    case QGradKind::Spline: return spline_value(knots_, knot_values_, x);
    case QGradKind::Sigmoid: return q_sigmoid(x, *format_, est_.temperature);
  }
  return x;
}

double QuantizerRelaxation::slope(double x) const {
  switch (est_.kind) {
    case QGradKind::STE: return 1.0;
    case QGradKind::BaselinePower: return q_baseline_grad(x, *format_, est_.w, est_.max_slope);
    case QGradKind::Spline: return spline_slope(knots_, knot_values_, x, est_.clip_min);
    case QGradKind::Sigmoid: return q_sigmoid_grad(x, *format_, est_.temperature);
  }
  return 1.0;
}

std::vector<double> dZ(std::span<const double> block, DzKind kind, double beta) {
  std::vector<double> out(block.size(), 0.0);
  if (block.empty() || kind == DzKind::STE) return out;
  auto sign = [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); };
  if (kind == DzKind::Absmax) {
    std::size_t k = 0;
    for (std::size_t i = 1; i < block.size(); ++i) {
      if (std::abs(block[i]) > std::abs(block[k])) k = i;
    }
    out[k] = sign(block[k]);
    return out;
  }
  double m = 0.0;
  for (double v : block) m = std::max(m, std::abs(v));
  double sum = 0.0;
  for (std::size_t i = 0; i < block.size(); ++i) {
    out[i] = std::exp(beta * (std::abs(block[i]) - m));
    sum += out[i];
  }
  for (std::size_t i = 0; i < block.size(); ++i) out[i] = out[i] / sum * sign(block[i]);
  return out;
}

std::vector<double> ds_dX(double z, std::span<const double> dz) {
  std::vector<double> out(dz.size(), 0.0);
  if (z == 0.0) return out;
  const double k = -kFp4Max / (z * z);
  for (std::size_t i = 0; i < dz.size(); ++i) out[i] = k * dz[i];
  return out;
}

double assemble_df_dX(double x, double s_q, double q_value, double q_slope, double scale_slope,
                      double ds) {
  return q_slope + ds * (scale_slope / s_q) * (x * q_slope - q_value / s_q);
}

double assemble_dh_dX(double df_dU, double dg, double f_U, double u) {
  return df_dU + dg * (f_U - u * df_dU);
}

bool selective_scale_gate(double s, double threshold) { return s < threshold; }

double scale_multiplier_for(const QuantGradConfig& cfg) {
  if (!cfg.tensor_scaling) return 1.0;
  if (cfg.spec.scale_format == &e4m3() || cfg.spec.rescale_any_format) {
    return rescale_constant(*cfg.spec.scale_format);
  }
  return 1.0;
}

namespace {

// Relaxed scale quantizer s -> C q~(s / C) with the forward's zero and
// overflow handling.
struct ScaleRelax {
  QuantizerRelaxation relax;
  double multiplier;
  const BlockSpec* spec;
  const ScaleGradConfig* cfg;

  double value(double s) const {
    const FloatFormat& f = *spec->scale_format;
    if (!std::isfinite(s)) return multiplier * f.max_finite();
    double v = relax.value(s / multiplier);
    if (relax.estimator().kind == QGradKind::STE) v = quantize_scale(s / multiplier, *spec);
    if (!(v > 0.0)) v = spec->zero_mode == ZeroScaleMode::ToOne ? 1.0 : f.min_positive();
    return multiplier * v;
  }

  // d(C q~(s/C))/ds = q~'(s/C).
  double slope(double s) const {
    if (!std::isfinite(s)) return 0.0;
    const double t = s / multiplier;
    if (cfg->selective_threshold && !selective_scale_gate(t, *cfg->selective_threshold)) return 1.0;
    return relax.slope(t);
  }
};

struct Layout {
  std::size_t rows, cols, l, bpr;
  std::size_t begin(std::size_t b) const { return (b / bpr) * cols + (b % bpr) * l; }
  std::size_t len(std::size_t b) const { return std::min(l, cols - (b % bpr) * l); }
  std::size_t blocks() const { return rows * bpr; }
};

Layout layout_of(const Matrix& x, const BlockSpec& spec) {
  return {x.rows(), x.cols(), spec.block_size, (x.cols() + spec.block_size - 1) / spec.block_size};
}

std::span<const double> block_of(const Matrix& m, const Layout& lay, std::size_t b) {
  return {m.flat().data() + lay.begin(b), lay.len(b)};
}

double global_scale(const Matrix& x, const Layout& lay, const ZFunction& z, std::size_t* argmax) {
  double g = 0.0;
  std::size_t arg = 0;
  for (std::size_t b = 0; b < lay.blocks(); ++b) {
    const double zb = z_value(block_of(x, lay, b), z);
    if (zb > g) {
      g = zb;
      arg = b;
    }
  }
  if (argmax) *argmax = arg;
  return g == 0.0 ? 1.0 : g;
}

}  // namespace

Matrix surrogate_quantize(const Matrix& x, const QuantGradConfig& cfg) {
  const Layout lay = layout_of(x, cfg.spec);
  const double g = cfg.tensor_scaling ? global_scale(x, lay, cfg.spec.z, nullptr) : 1.0;
  const QuantizerRelaxation elem(cfg.elem, *cfg.spec.elem_format);
  const ScaleRelax scale{QuantizerRelaxation(cfg.scale.q_grad, *cfg.spec.scale_format),
                         scale_multiplier_for(cfg), &cfg.spec, &cfg.scale};
  Matrix out(x.rows(), x.cols());
  std::vector<double> u;
  for (std::size_t b = 0; b < lay.blocks(); ++b) {
    const auto xb = block_of(x, lay, b);
    u.assign(xb.begin(), xb.end());
    for (double& v : u) v /= g;
    const double z = z_value(u, cfg.spec.z);
    const double sq = scale.value(z == 0.0 ? INFINITY : kFp4Max / z);
    double* o = out.flat().data() + lay.begin(b);
    for (std::size_t k = 0; k < u.size(); ++k) o[k] = g * (elem.value(sq * u[k]) / sq);
  }
  return out;
}

Matrix quantizer_vjp(const Matrix& x, const Matrix& grad_out, const QuantGradConfig& cfg,
                     const QuantizedTensor* hard_scales) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != x.cols()) {
    throw std::invalid_argument("quantizer_vjp: gradient shape does not match input");
  }
  const Layout lay = layout_of(x, cfg.spec);
  std::size_t gmax_block = 0;
  double g = 1.0;
  if (cfg.tensor_scaling) {
    g = global_scale(x, lay, cfg.spec.z, &gmax_block);
    if (hard_scales) g = hard_scales->global_scale;
  }
  const QuantizerRelaxation elem(cfg.elem, *cfg.spec.elem_format);
  const ScaleRelax scale{QuantizerRelaxation(cfg.scale.q_grad, *cfg.spec.scale_format),
                         scale_multiplier_for(cfg), &cfg.spec, &cfg.scale};
  const bool ste_scale = cfg.scale.dz == DzKind::STE;
  const bool exact = cfg.assembly == GradAssembly::Exact;
  const bool tensor_term = cfg.tensor_scaling && cfg.tensor_grad != TensorScaleGradMode::Ignore;

  Matrix out(x.rows(), x.cols());
  // Per element: f(U) and U-contracted Jacobian row (only needed for the
  // tensor-scale term).
  std::vector<double> f_u, ju;
  if (tensor_term) {
    f_u.assign(x.size(), 0.0);
    ju.assign(x.size(), 0.0);
  }

  std::vector<double> u, qs, qv, bk;
  for (std::size_t b = 0; b < lay.blocks(); ++b) {
    const std::size_t off = lay.begin(b);
    const auto xb = block_of(x, lay, b);
    const std::size_t n = xb.size();
    u.assign(xb.begin(), xb.end());
    for (double& v : u) v /= g;
    const double z = z_value(u, cfg.spec.z);
    const double s = z == 0.0 ? INFINITY : kFp4Max / z;
    const double sq = hard_scales ? hard_scales->effective_scale(b) : scale.value(s);
    const double c = ste_scale ? 0.0 : scale.slope(s) / sq;
    const auto ds = ds_dX(z, dZ(u, cfg.scale.dz, cfg.scale.beta));
    qs.resize(n);
    qv.resize(n);
    bk.resize(n);
    double gb = 0.0, dsu = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double a = sq * u[k];
      qv[k] = elem.value(a);
      qs[k] = elem.slope(a);
      bk[k] = u[k] * qs[k] - qv[k] / sq;
      gb += grad_out.flat()[off + k] * bk[k];
      dsu += ds[k] * u[k];
    }
    const double unit = (ste_scale && cfg.scale.ste_reading == SteScaleReading::UnitTerm) ? 1.0 : 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double gk = grad_out.flat()[off + k];
      const double diag = ste_scale ? qs[k] + unit : qs[k] + ds[k] * c * bk[k];
      double v;
      if (exact && !ste_scale) {
        v = gk * qs[k] + ds[k] * c * gb;
      } else {
        v = gk * diag;
      }
      out.flat()[off + k] = v;
      if (tensor_term) {
        f_u[off + k] = qv[k] / sq;
        // Row k of the block Jacobian contracted with U. Through s it picks up
        // every element of the block, not only U_k.
        ju[off + k] = ste_scale ? diag * u[k] : qs[k] * u[k] + c * bk[k] * dsu;
      }
    }
  }

  if (tensor_term) {
    std::vector<double> dg(x.size(), 0.0);
    if (cfg.tensor_grad == TensorScaleGradMode::STE) {
      std::fill(dg.begin(), dg.end(), 1.0);
    } else {
      const DzKind kind = (cfg.scale.dz == DzKind::Softmax || cfg.scale.dz == DzKind::Hybrid)
                              ? cfg.scale.dz
                              : DzKind::Absmax;
      const auto d = dZ(block_of(x, lay, gmax_block), kind, cfg.scale.beta);
      std::copy(d.begin(), d.end(), dg.begin() + static_cast<std::ptrdiff_t>(lay.begin(gmax_block)));
    }
    if (exact) {
      double t = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) t += grad_out.flat()[i] * (f_u[i] - ju[i]);
      for (std::size_t i = 0; i < x.size(); ++i) out.flat()[i] += dg[i] * t;
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) {
        out.flat()[i] += grad_out.flat()[i] * dg[i] * (f_u[i] - ju[i]);
      }
    }
  }
  return out;
}

}  // namespace mxsim
