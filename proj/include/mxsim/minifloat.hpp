// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mxsim/random.hpp"

namespace mxsim {

/// Which encodings of a format are taken away from finite values.
enum class SpecialPolicy {
  None,                 // every code is finite
  TopExponentReserved,  // IEEE style: max exponent field is inf/NaN
  AllOnesNaN,           // only the all-ones code (sign aside) is NaN (OCP E4M3, E8M0)
};

enum class RoundingKind { TiesToEven, TowardPositive, Stochastic };

std::string_view to_string(RoundingKind kind);
RoundingKind parse_rounding_kind(std::string_view name);

struct FormatParams {
  std::string name;
  int exponent_bits = 0;
  int mantissa_bits = 0;
  int bias = 0;
  bool is_signed = true;
  SpecialPolicy special = SpecialPolicy::None;
  /// When false the exponent field 0 is an ordinary binade (no zero, no
  /// subnormals), as in the exponent-only E8M0 scale format.
  bool subnormals = true;
};

/// Bit-exact description of a small binary floating-point format.
///
/// The finite values are enumerated once at construction; rounding and
/// encoding work on that sorted grid so every format shares one code path.
class FloatFormat {
 public:
  explicit FloatFormat(FormatParams params);

  const std::string& name() const { return params_.name; }
  const FormatParams& params() const { return params_; }
  int exponent_bits() const { return params_.exponent_bits; }
  int mantissa_bits() const { return params_.mantissa_bits; }
  int bias() const { return params_.bias; }
  bool is_signed() const { return params_.is_signed; }
  int total_bits() const;

  /// Every finite value, ascending, signed zero collapsed to one +0.
  std::span<const double> grid() const { return grid_; }
  double max_finite() const { return grid_.back(); }
  /// Smallest strictly positive value (a subnormal when the format has them).
  double min_positive() const { return min_positive_; }
  bool has_zero() const { return has_zero_; }

  /// Encoding of grid()[i].
  std::uint32_t grid_code(std::size_t i) const { return grid_codes_[i]; }

  /// Throws std::invalid_argument when `value` is not on the grid.
  std::uint32_t encode(double value) const;
  /// NaN for reserved codes; throws std::out_of_range for codes wider than
  /// total_bits().
  double decode(std::uint32_t bits) const;
  bool is_reserved(std::uint32_t bits) const;
  std::uint32_t code_count() const { return std::uint32_t{1} << total_bits(); }

  /// Index i with grid()[i] <= value < grid()[i+1]; value must lie inside
  /// [grid().front(), grid().back()).
  std::size_t lower_index(double value) const;

 private:
  double decode_unchecked(std::uint32_t bits) const;

  FormatParams params_;
  std::vector<double> grid_;
  std::vector<std::uint32_t> grid_codes_;
  double min_positive_ = 0.0;
  bool has_zero_ = false;
};

struct RoundResult {
  double value = 0.0;
  bool saturated = false;   // |input| beyond the largest finite magnitude
  bool underflowed = false; // non-zero input below the smallest positive value
};

/// Rounds a finite real onto the format grid.
///
/// Overflow saturates to +-max_finite. Inputs below the grid of an unsigned
/// format land on grid().front(). Ties under TiesToEven go to the even code.
/// Stochastic requires `rng`. Throws std::domain_error on NaN or infinity.
RoundResult round(double value, const FloatFormat& format, RoundingKind mode,
                  RandomStream* rng = nullptr);

inline double round_value(double value, const FloatFormat& format, RoundingKind mode,
                          RandomStream* rng = nullptr) {
  return round(value, format, mode, rng).value;
}

class UnknownFormat : public std::invalid_argument {
 public:
  explicit UnknownFormat(std::string_view name);
};

/// Registry lookup by the exact names used in configs and CSV files:
/// "E2M1", "E8M0", "E4M3", "UE5M3", "E8M3", "E5M2".
const FloatFormat& format_by_name(std::string_view name);
std::span<const std::string_view> format_names();

const FloatFormat& e2m1();
const FloatFormat& e8m0();
const FloatFormat& e4m3();
const FloatFormat& ue5m3();
const FloatFormat& e8m3();
const FloatFormat& e5m2();

}  // namespace mxsim
