// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "mxsim/hadamard.hpp"
#include "mxsim/matrix.hpp"
#include "mxsim/mx_quant.hpp"
#include "mxsim/qgrad.hpp"

namespace mxsim {

/// Where stochastic rounding replaces round-to-nearest for elements.
/// Weights are always rounded to nearest.
enum class SrPolicy { None, BackwardActivations, AllActivations };

std::string_view to_string(SrPolicy policy);
/// "None", "backward", "all".
SrPolicy parse_sr_policy(std::string_view name);

enum class QuantMode {
  Hard,       // MX quantization in the forward, relaxed gradients in the backward
  Surrogate,  // relaxed forward and exact gradients of it; gY is not quantized
  Disabled,   // plain dense layer (Hadamard rotations still apply)
};

struct QLinearConfig {
  QuantGradConfig quant;
  HadamardSpec hadamard;
  SrPolicy sr_policy = SrPolicy::None;
  QuantMode mode = QuantMode::Hard;
  unsigned threads = 1;
};

/// Counts quantization sites touched per layer.
struct SiteCounter {
  int forward_quant = 0;  // f(X), f(W)
  int grad_quant = 0;     // gY, once for each backward matmul
  int reuse = 0;          // dequantized f(X), f(W) consumed by the backward
};

/// What the backward needs. Inputs and dequantized operands are kept in the
/// forward's rotated domain when the forward uses a Hadamard transform.
struct LayerContext {
  Matrix x;
  Matrix w;
  Matrix fx;
  Matrix fw;
  std::optional<QuantizedTensor> qx;
  std::optional<QuantizedTensor> qw;
  std::uint64_t step_seed = 0;
};

struct ForwardResult {
  Matrix y;
  LayerContext ctx;
};

struct BackwardResult {
  Matrix gx;
  Matrix gw;
  bool finite = true;  // false when gY had a non-finite entry; gx and gw are then zero
};

/// Y = f(X) f(W)^T with X [b x m] and W [n x m], both blocked along m.
ForwardResult qlinear_forward(const Matrix& x, const Matrix& w, const QLinearConfig& cfg,
                              std::uint64_t step_seed, SiteCounter* counter = nullptr);

BackwardResult qlinear_backward(const Matrix& gy, const LayerContext& ctx, const QLinearConfig& cfg,
                                SiteCounter* counter = nullptr);

}  // namespace mxsim
