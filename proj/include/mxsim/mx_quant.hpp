// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "mxsim/matrix.hpp"
#include "mxsim/minifloat.hpp"

namespace mxsim {

/// Largest E2M1 magnitude; numerator of the ideal block scale.
inline constexpr double kFp4Max = 6.0;

enum class ZKind { Absmax, LogSumExp };

/// Block statistic Z(X_p): absmax, or its LogSumExp relaxation
/// (1/beta) log sum exp(beta |x|).
struct ZFunction {
  ZKind kind = ZKind::Absmax;
  double beta = 40.0;
};

enum class ZeroScaleMode { NearestSubnormal, ToOne };

std::string_view to_string(ZeroScaleMode mode);
ZeroScaleMode parse_zero_scale_mode(std::string_view name);

struct BlockSpec {
  std::size_t block_size = 32;
  const FloatFormat* elem_format = &e2m1();
  const FloatFormat* scale_format = &e8m0();
  ZFunction z;
  RoundingKind scale_rounding = RoundingKind::TiesToEven;
  RoundingKind elem_rounding = RoundingKind::TiesToEven;
  ZeroScaleMode zero_mode = ZeroScaleMode::NearestSubnormal;
  /// Apply the range-centering rescale under tensor scaling for scale formats
  /// other than E4M3 (E4M3 always gets it).
  bool rescale_any_format = false;
};

/// Z of a block. An all-zero block gives 0 under Absmax.
double z_value(std::span<const double> block, const ZFunction& z);

/// FP4_max / Z, or +infinity when Z is 0.
double block_scale(std::span<const double> block, const BlockSpec& spec);

/// Rounds an ideal scale into the scale format. Zero results are replaced
/// per spec.zero_mode, overflow (and the +infinity sentinel) saturates.
/// Always returns a strictly positive grid value.
double quantize_scale(double s, const BlockSpec& spec, RandomStream* rng = nullptr);

/// FP4_max * max_finite(scale_format) * 0.5; 1344 for E4M3.
double rescale_constant(const FloatFormat& scale_format);

/// s' / (FP4_max * E4M3_max * 0.5), the NVFP4 range-centering heuristic.
double nvfp4_rescale(double s_prime);

struct BlockQuant {
  double scale = 0.0;               // s_q
  std::vector<std::uint8_t> codes;  // element encodings
};

/// f(X_p) = (1/s_q) Q(s_q X_p), split into the stored pieces.
BlockQuant quantize_block(std::span<const double> block, const BlockSpec& spec,
                          RandomStream* rng = nullptr);
std::vector<double> dequantize_block(double scale, std::span<const std::uint8_t> codes,
                                     const BlockSpec& spec);

struct TensorQuantOptions {
  bool tensor_scaling = false;
  std::uint64_t seed = 0;       // global seed for stochastic rounding streams
  std::uint64_t tensor_id = 0;  // distinguishes quantization sites
  unsigned threads = 1;
};

/// MX representation of a rows x cols tensor. Blocks run along each row;
/// a row whose length is not a multiple of the block size ends in a short
/// block (zero padding that never enters Z).
struct QuantizedTensor {
  std::vector<std::size_t> shape;  // original dims; the last one is the row length
  std::size_t rows = 0;
  std::size_t cols = 0;
  BlockSpec spec;
  bool tensor_scaling = false;
  double global_scale = 1.0;      // g
  double scale_multiplier = 1.0;  // rescale constant folded into every block scale
  std::vector<double> scales;     // stored scale values, one per block
  std::vector<std::uint8_t> codes;  // one element code per tensor element

  std::size_t blocks_per_row() const;
  std::size_t block_count() const { return scales.size(); }
  /// Multiplier applied to X / g inside block b: scale_multiplier * scales[b].
  double effective_scale(std::size_t block) const { return scale_multiplier * scales[block]; }
};

QuantizedTensor quantize_tensor(const Matrix& x, const BlockSpec& spec,
                                const TensorQuantOptions& options = {});
Matrix dequantize_tensor(const QuantizedTensor& qt);

/// Binary layout: "MXQT" magic, version, dims, format names, block size,
/// tensor-scaling flag, g, rescale constant, scale codes (1 or 2 bytes each),
/// element codes packed two per byte, low nibble first. Little-endian.
std::vector<std::uint8_t> serialize(const QuantizedTensor& qt);
QuantizedTensor deserialize(std::span<const std::uint8_t> bytes);

/// row,col,value,code,block,scale
void write_csv_dump(std::ostream& os, const QuantizedTensor& qt);

}  // namespace mxsim
