// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/qlinear.hpp"

#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace mxsim {

std::string_view to_string(SrPolicy policy) {
  switch (policy) {
    case SrPolicy::None: return "None";
    case SrPolicy::BackwardActivations: return "backward";
    case SrPolicy::AllActivations: return "all";
  }
  return "?";
}

SrPolicy parse_sr_policy(std::string_view name) {
  if (name == "None" || name == "none") return SrPolicy::None;
  if (name == "backward") return SrPolicy::BackwardActivations;
  if (name == "all") return SrPolicy::AllActivations;
  throw std::invalid_argument(fmt::format("unknown SR policy '{}' (expected None, backward, all)", name));
}

namespace {

enum Site : std::uint64_t { kSiteX = 1, kSiteW = 2, kSiteGyData = 3, kSiteGyWeight = 4 };
enum Axis : std::uint64_t { kAxisIn = 0, kAxisOut = 1, kAxisBatch = 2 };

HadamardSpec rotation(const QLinearConfig& cfg, std::uint64_t step_seed, Axis axis) {
  HadamardSpec h = cfg.hadamard;
  h.seed = derive_seed({cfg.hadamard.seed, step_seed, axis});
  return h;
}

bool forward_rotates(const QLinearConfig& cfg) { return cfg.hadamard.mode == HadamardMode::All; }
bool backward_rotates(const QLinearConfig& cfg) { return cfg.hadamard.mode != HadamardMode::None; }

struct Quantized {
  Matrix deq;
  QuantizedTensor qt;
};

Quantized hard_quantize(const Matrix& m, const QLinearConfig& cfg, bool stochastic,
                        std::uint64_t seed, Site site) {
  BlockSpec spec = cfg.quant.spec;
  spec.elem_rounding = stochastic ? RoundingKind::Stochastic : RoundingKind::TiesToEven;
  TensorQuantOptions opt;
  opt.tensor_scaling = cfg.quant.tensor_scaling;
  opt.seed = seed;
  opt.tensor_id = site;
  opt.threads = cfg.threads;
  Quantized out{Matrix{}, quantize_tensor(m, spec, opt)};
  out.deq = dequantize_tensor(out.qt);
  return out;
}

// One backward matmul: (quantized a) times b^T, both rotated along their
// shared contraction axis when the policy asks for it.
Matrix backward_product(const Matrix& a, const Matrix& b, const QLinearConfig& cfg,
                        std::uint64_t step_seed, Axis axis, Site site) {
  Matrix lhs = a, rhs = b;
  if (backward_rotates(cfg)) {
    const HadamardSpec h = rotation(cfg, step_seed, axis);
    lhs = transform_rows(lhs, h);
    rhs = transform_rows(rhs, h);
  }
  if (cfg.mode == QuantMode::Hard) {
    const bool sr = cfg.sr_policy != SrPolicy::None;
    lhs = hard_quantize(lhs, cfg, sr, step_seed, site).deq;
  }
  return matmul_nt(lhs, rhs);
}

}  // namespace

ForwardResult qlinear_forward(const Matrix& x, const Matrix& w, const QLinearConfig& cfg,
                              std::uint64_t step_seed, SiteCounter* counter) {
  if (x.cols() != w.cols()) {
    throw std::invalid_argument(fmt::format("qlinear: X has {} columns but W has {}", x.cols(),
                                            w.cols()));
  }
  ForwardResult r;
  LayerContext& ctx = r.ctx;
  ctx.step_seed = step_seed;
  ctx.x = x;
  ctx.w = w;
  if (forward_rotates(cfg)) {
    const HadamardSpec h = rotation(cfg, step_seed, kAxisIn);
    ctx.x = transform_rows(x, h);
    ctx.w = transform_rows(w, h);
  }
  switch (cfg.mode) {
    case QuantMode::Disabled:
      ctx.fx = ctx.x;
      ctx.fw = ctx.w;
      break;
    case QuantMode::Surrogate:
      ctx.fx = surrogate_quantize(ctx.x, cfg.quant);
      ctx.fw = surrogate_quantize(ctx.w, cfg.quant);
      break;
    case QuantMode::Hard: {
      auto qx = hard_quantize(ctx.x, cfg, cfg.sr_policy == SrPolicy::AllActivations, step_seed, kSiteX);
      auto qw = hard_quantize(ctx.w, cfg, false, step_seed, kSiteW);
      ctx.fx = std::move(qx.deq);
      ctx.fw = std::move(qw.deq);
      ctx.qx = std::move(qx.qt);
      ctx.qw = std::move(qw.qt);
      if (counter) counter->forward_quant += 2;
      break;
    }
  }
  r.y = matmul_nt(ctx.fx, ctx.fw);
  return r;
}

BackwardResult qlinear_backward(const Matrix& gy, const LayerContext& ctx, const QLinearConfig& cfg,
                                SiteCounter* counter) {
  const std::size_t b = ctx.x.rows(), n = ctx.w.rows(), m = ctx.x.cols();
  if (gy.rows() != b || gy.cols() != n) {
    throw std::invalid_argument(
        fmt::format("qlinear: gradient is {}x{}, expected {}x{}", gy.rows(), gy.cols(), b, n));
  }
  BackwardResult r;
  if (!all_finite(gy)) {
    r.finite = false;
    r.gx = Matrix(b, m);
    r.gw = Matrix(n, m);
    return r;
  }

  Matrix gfx, gfw;
  if (cfg.mode == QuantMode::Disabled && !backward_rotates(cfg)) {
    // Plain dense backward.
    gfx = matmul(gy, ctx.fw);
    gfw = matmul(transpose(gy), ctx.fx);
  } else {
    gfx = backward_product(gy, transpose(ctx.fw), cfg, ctx.step_seed, kAxisOut, kSiteGyData);
    gfw = backward_product(transpose(gy), transpose(ctx.fx), cfg, ctx.step_seed, kAxisBatch,
                           kSiteGyWeight);
  }
  if (cfg.mode == QuantMode::Hard && counter) {
    counter->grad_quant += 2;
    counter->reuse += 2;
  }

  switch (cfg.mode) {
    case QuantMode::Disabled:
      r.gx = std::move(gfx);
      r.gw = std::move(gfw);
      break;
    case QuantMode::Surrogate:
      r.gx = quantizer_vjp(ctx.x, gfx, cfg.quant);
      r.gw = quantizer_vjp(ctx.w, gfw, cfg.quant);
      break;
    case QuantMode::Hard:
      r.gx = quantizer_vjp(ctx.x, gfx, cfg.quant, &*ctx.qx);
      r.gw = quantizer_vjp(ctx.w, gfw, cfg.quant, &*ctx.qw);
      break;
  }
  if (forward_rotates(cfg)) {
    const HadamardSpec h = rotation(cfg, ctx.step_seed, kAxisIn);
    r.gx = invert_rows(r.gx, h);
    r.gw = invert_rows(r.gw, h);
  }
  return r;
}

}  // namespace mxsim
