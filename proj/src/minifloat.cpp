// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/minifloat.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace mxsim {

std::string_view to_string(RoundingKind kind) {
  switch (kind) {
    case RoundingKind::TiesToEven: return "TiesToEven";
    case RoundingKind::TowardPositive: return "TowardPositive";
    case RoundingKind::Stochastic: return "Stochastic";
  }
  return "?";
}

RoundingKind parse_rounding_kind(std::string_view name) {
  if (name == "TiesToEven" || name == "RTN") return RoundingKind::TiesToEven;
  if (name == "TowardPositive") return RoundingKind::TowardPositive;
  if (name == "Stochastic" || name == "SR") return RoundingKind::Stochastic;
  throw std::invalid_argument(fmt::format(
      "unknown rounding mode '{}' (valid: TiesToEven, TowardPositive, Stochastic)", name));
}

FloatFormat::FloatFormat(FormatParams params) : params_(std::move(params)) {
  const auto& p = params_;
  if (p.exponent_bits < 1 || p.exponent_bits > 8 || p.mantissa_bits < 0 ||
      p.mantissa_bits > 3) {
    throw std::invalid_argument(fmt::format("format {}: unsupported bit widths E{}M{}", p.name,
                                            p.exponent_bits, p.mantissa_bits));
  }
  for (std::uint32_t code = 0; code < code_count(); ++code) {
    if (is_reserved(code)) continue;
    const double v = decode_unchecked(code);
    if (v == 0.0 && std::signbit(v)) continue;  // -0 collapses to +0
    grid_.push_back(v);
    grid_codes_.push_back(code);
  }
  std::vector<std::size_t> order(grid_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return grid_[a] < grid_[b]; });
  std::vector<double> g;
  std::vector<std::uint32_t> c;
  for (auto i : order) {
    g.push_back(grid_[i]);
    c.push_back(grid_codes_[i]);
  }
  grid_ = std::move(g);
  grid_codes_ = std::move(c);
  has_zero_ = std::binary_search(grid_.begin(), grid_.end(), 0.0);
  min_positive_ = *std::upper_bound(grid_.begin(), grid_.end(), 0.0);
}

int FloatFormat::total_bits() const {
  return params_.exponent_bits + params_.mantissa_bits + (params_.is_signed ? 1 : 0);
}

bool FloatFormat::is_reserved(std::uint32_t bits) const {
  const std::uint32_t exp_mask = (1u << params_.exponent_bits) - 1;
  const std::uint32_t man_mask = (1u << params_.mantissa_bits) - 1;
  const std::uint32_t exp = (bits >> params_.mantissa_bits) & exp_mask;
  const std::uint32_t man = bits & man_mask;
  switch (params_.special) {
    case SpecialPolicy::None: return false;
    case SpecialPolicy::TopExponentReserved: return exp == exp_mask;
    case SpecialPolicy::AllOnesNaN: return exp == exp_mask && man == man_mask;
  }
  return false;
}

double FloatFormat::decode_unchecked(std::uint32_t bits) const {
  const auto& p = params_;
  const std::uint32_t exp_mask = (1u << p.exponent_bits) - 1;
  const std::uint32_t man_mask = (1u << p.mantissa_bits) - 1;
  const std::uint32_t exp = (bits >> p.mantissa_bits) & exp_mask;
  const std::uint32_t man = bits & man_mask;
  const bool negative = p.is_signed && ((bits >> (p.exponent_bits + p.mantissa_bits)) & 1u);
  const double frac = std::ldexp(static_cast<double>(man), -p.mantissa_bits);
  double magnitude;
  if (exp == 0 && p.subnormals) {
    magnitude = std::ldexp(frac, 1 - p.bias);
  } else {
    magnitude = std::ldexp(1.0 + frac, static_cast<int>(exp) - p.bias);
  }
  return negative ? -magnitude : magnitude;
}

double FloatFormat::decode(std::uint32_t bits) const {
  if (bits >= code_count()) {
    throw std::out_of_range(fmt::format("code {:#x} wider than {} bits of {}", bits,
                                        total_bits(), name()));
  }
  if (is_reserved(bits)) return std::numeric_limits<double>::quiet_NaN();
  const double v = decode_unchecked(bits);
  return v == 0.0 ? 0.0 : v;
}

std::uint32_t FloatFormat::encode(double value) const {
  if (value == 0.0) value = 0.0;
  auto it = std::lower_bound(grid_.begin(), grid_.end(), value);
  if (it == grid_.end() || *it != value) {
    throw std::invalid_argument(fmt::format("{} is not representable in {}", value, name()));
  }
  return grid_codes_[static_cast<std::size_t>(it - grid_.begin())];
}

std::size_t FloatFormat::lower_index(double value) const {
  auto it = std::upper_bound(grid_.begin(), grid_.end(), value);
  return static_cast<std::size_t>(it - grid_.begin()) - 1;
}

RoundResult round(double value, const FloatFormat& format, RoundingKind mode, RandomStream* rng) {
  if (!std::isfinite(value)) {
    throw std::domain_error(fmt::format("cannot round non-finite value into {}", format.name()));
  }
  const auto grid = format.grid();
  RoundResult r;
  r.underflowed = value != 0.0 && std::abs(value) < format.min_positive();
  if (value >= grid.back()) {
    r.saturated = value > grid.back();
    r.value = grid.back();
    return r;
  }
  if (value <= grid.front()) {
    r.saturated = format.is_signed() && value < grid.front();
    r.value = grid.front();
    return r;
  }
  const std::size_t i = format.lower_index(value);
  const double lo = grid[i];
  if (lo == value) {
    r.value = lo;
    return r;
  }
  const double hi = grid[i + 1];
  switch (mode) {
    case RoundingKind::TiesToEven: {
      const double mid = 0.5 * (lo + hi);
      if (value < mid) {
        r.value = lo;
      } else if (value > mid) {
        r.value = hi;
      } else {
        r.value = (format.grid_code(i) & 1u) == 0 ? lo : hi;
      }
      break;
    }
    case RoundingKind::TowardPositive:
      r.value = hi;
      break;
    case RoundingKind::Stochastic: {
      if (rng == nullptr) throw std::invalid_argument("stochastic rounding needs a RandomStream");
      const double p = (value - lo) / (hi - lo);
      r.value = rng->uniform() < p ? hi : lo;
      break;
    }
  }
  if (r.value == 0.0) r.value = 0.0;
  return r;
}

UnknownFormat::UnknownFormat(std::string_view name)
    : std::invalid_argument(fmt::format(
          "unknown format '{}' (valid: E2M1, E8M0, E4M3, UE5M3, E8M3, E5M2)", name)) {}

namespace {

constexpr std::array<std::string_view, 6> kNames = {"E2M1", "E8M0", "E4M3", "UE5M3", "E8M3", "E5M2"};

}  // namespace

const FloatFormat& e2m1() {
  static const FloatFormat f({"E2M1", 2, 1, 1, true, SpecialPolicy::None, true});
  return f;
}
const FloatFormat& e8m0() {
  static const FloatFormat f({"E8M0", 8, 0, 127, false, SpecialPolicy::AllOnesNaN, false});
  return f;
}
const FloatFormat& e4m3() {
  static const FloatFormat f({"E4M3", 4, 3, 7, true, SpecialPolicy::AllOnesNaN, true});
  return f;
}
const FloatFormat& ue5m3() {
  static const FloatFormat f({"UE5M3", 5, 3, 15, false, SpecialPolicy::None, true});
  return f;
}
const FloatFormat& e8m3() {
  static const FloatFormat f({"E8M3", 8, 3, 127, false, SpecialPolicy::None, true});
  return f;
}
const FloatFormat& e5m2() {
  static const FloatFormat f({"E5M2", 5, 2, 15, true, SpecialPolicy::TopExponentReserved, true});
  return f;
}

const FloatFormat& format_by_name(std::string_view name) {
  if (name == "E2M1") return e2m1();
  if (name == "E8M0") return e8m0();
  if (name == "E4M3") return e4m3();
  if (name == "UE5M3" || name == "E5M3") return ue5m3();
  if (name == "E8M3") return e8m3();
  if (name == "E5M2") return e5m2();
  throw UnknownFormat(name);
}

std::span<const std::string_view> format_names() { return kNames; }

}  // namespace mxsim
