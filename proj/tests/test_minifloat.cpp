// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "mxsim/minifloat.hpp"
#include "oracles.hpp"

using namespace mxsim;

TEST_CASE("E2M1 grid") {
  const std::vector<double> expected = {-6, -4, -3, -2, -1.5, -1, -0.5, 0,
                                        0.5, 1, 1.5, 2, 3, 4, 6};
  const auto g = e2m1().grid();
  CHECK(std::vector<double>(g.begin(), g.end()) == expected);
  CHECK(e2m1().max_finite() == 6.0);
  CHECK(e2m1().min_positive() == 0.5);
}

TEST_CASE("E8M0 grid is every power of two from 2^-127 to 2^127") {
  const auto g = e8m0().grid();
  REQUIRE(g.size() == 255);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g[i] == std::ldexp(1.0, static_cast<int>(i) - 127));
  }
  CHECK_FALSE(e8m0().has_zero());
}

TEST_CASE("scale format extremes") {
  CHECK(e4m3().max_finite() == 448.0);
  CHECK(e4m3().min_positive() == 0.001953125);
  CHECK(ue5m3().max_finite() == 122880.0);
  CHECK(ue5m3().min_positive() == std::ldexp(1.0, 1 - 15 - 3));
  CHECK(e5m2().max_finite() == 57344.0);
  CHECK(e8m3().max_finite() == 1.875 * std::ldexp(1.0, 128));
}

TEST_CASE("max_finite and min subnormal follow the bit parameters") {
  for (auto name : format_names()) {
    const FloatFormat& f = format_by_name(name);
    const auto& p = f.params();
    if (p.special == SpecialPolicy::None && p.subnormals) {
      const int emax = (1 << p.exponent_bits) - 1 - p.bias;
      CHECK(f.max_finite() == (2.0 - std::ldexp(1.0, -p.mantissa_bits)) * std::ldexp(1.0, emax));
    }
    if (p.subnormals) {
      CHECK(f.min_positive() == std::ldexp(1.0, 1 - p.bias - p.mantissa_bits));
    }
  }
}

TEST_CASE("grid is strictly increasing and symmetric when signed") {
  for (auto name : format_names()) {
    const FloatFormat& f = format_by_name(name);
    const auto g = f.grid();
    CHECK(std::adjacent_find(g.begin(), g.end(), std::greater_equal<>()) == g.end());
    if (f.is_signed()) {
      for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == -g[g.size() - 1 - i]);
    }
  }
}

TEST_CASE("grid matches an independent decoder") {
  for (auto name : format_names()) {
    const FloatFormat& f = format_by_name(name);
    const auto oracle = oracle::grid(f.params());
    const auto g = f.grid();
    CHECK(std::vector<double>(g.begin(), g.end()) == oracle);
  }
}

TEST_CASE("encode/decode round trip over every finite code") {
  for (auto name : format_names()) {
    const FloatFormat& f = format_by_name(name);
    for (double v : f.grid()) CHECK(f.decode(f.encode(v)) == v);
    std::size_t finite = 0;
    for (std::uint32_t c = 0; c < f.code_count(); ++c) {
      const double v = f.decode(c);
      if (std::isnan(v)) {
        CHECK(f.is_reserved(c));
        continue;
      }
      ++finite;
      if (v == 0.0 && c != f.encode(0.0)) continue;  // -0 decodes to +0
      CHECK(f.encode(v) == c);
    }
    CHECK(finite >= f.grid().size());
  }
  CHECK(e2m1().decode(e2m1().encode(1.5)) == 1.5);
  CHECK(e4m3().decode(e4m3().encode(448.0)) == 448.0);
  CHECK(e8m0().decode(e8m0().encode(std::ldexp(1.0, -127))) == std::ldexp(1.0, -127));
}

TEST_CASE("encode rejects values off the grid and decode rejects wide codes") {
  CHECK_THROWS_AS(e2m1().encode(2.5), std::invalid_argument);
  CHECK_THROWS_AS(e2m1().decode(16), std::out_of_range);
  CHECK(std::isnan(e4m3().decode(0x7f)));
  CHECK(std::isnan(e8m0().decode(0xff)));
}

TEST_CASE("round: worked values") {
  CHECK(round_value(2.5, e2m1(), RoundingKind::TiesToEven) == 2.0);
  const auto sat = round(7.0, e2m1(), RoundingKind::TiesToEven);
  CHECK(sat.value == 6.0);
  CHECK(sat.saturated);
  CHECK(round(-7.0, e2m1(), RoundingKind::TiesToEven).value == -6.0);
  CHECK(round_value(2.1, e2m1(), RoundingKind::TowardPositive) == 3.0);
  CHECK(round_value(-2.1, e2m1(), RoundingKind::TowardPositive) == -2.0);
  CHECK(round(0.1, e2m1(), RoundingKind::TiesToEven).underflowed);
  CHECK_THROWS_AS(round(NAN, e2m1(), RoundingKind::TiesToEven), std::domain_error);
  CHECK_THROWS_AS(round(INFINITY, e2m1(), RoundingKind::TiesToEven), std::domain_error);
}

TEST_CASE("E8M0 ties use the arithmetic midpoint and the even exponent field") {
  // 1.5 lies halfway between 1 (field 127) and 2 (field 128).
  CHECK(round_value(1.5, e8m0(), RoundingKind::TiesToEven) == 2.0);
  // 3 lies halfway between 2 (field 128) and 4 (field 129).
  CHECK(round_value(3.0, e8m0(), RoundingKind::TiesToEven) == 2.0);
}

TEST_CASE("RTN matches the brute-force oracle on random inputs") {
  for (auto name : format_names()) {
    const FloatFormat& f = format_by_name(name);
    const auto grid = oracle::grid(f.params());
    const auto codes = oracle::grid_codes(f.params());
    RandomStream rng(derive_seed({17, f.code_count()}));
    std::size_t mismatches = 0;
    const double top = f.max_finite() * 1.25;
    for (int i = 0; i < 100000; ++i) {
      double x;
      const double u = rng.uniform();
      if (i % 4 == 0) {
        // Log-uniform magnitudes exercise the small binades of wide formats.
        const double lo = std::log2(f.min_positive()) - 2;
        const double hi = std::log2(top);
        x = std::exp2(lo + (hi - lo) * u);
      } else if (i % 4 == 1) {
        // Exact midpoints between neighbours.
        const auto k = static_cast<std::size_t>(u * (grid.size() - 1));
        x = 0.5 * (grid[k] + grid[k + 1]);
      } else {
        x = top * u;
      }
      if (f.is_signed() && rng.uniform() < 0.5) x = -x;
      const double got = round_value(x, f, RoundingKind::TiesToEven);
      if (got != oracle::rtn(x, grid, codes)) ++mismatches;
    }
    CHECK_MESSAGE(mismatches == 0, name);
  }
}

TEST_CASE("TowardPositive is monotone and never rounds down") {
  for (auto name : format_names()) {
    const FloatFormat& f = format_by_name(name);
    RandomStream rng(5);
    std::vector<double> xs;
    for (int i = 0; i < 2000; ++i) {
      double x = f.max_finite() * (2 * rng.uniform() - (f.is_signed() ? 1 : 0));
      xs.push_back(x);
    }
    std::sort(xs.begin(), xs.end());
    double prev = -INFINITY;
    for (double x : xs) {
      const double r = round_value(x, f, RoundingKind::TowardPositive);
      CHECK(r >= prev);
      if (x <= f.max_finite()) CHECK(r >= x);
      prev = r;
    }
  }
}

TEST_CASE("SR picks the upper neighbour with the fractional probability") {
  RandomStream rng(99);
  int up = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) up += round_value(2.5, e2m1(), RoundingKind::Stochastic, &rng) == 3.0;
  CHECK(std::abs(up / double(n) - 0.5) < 4 * std::sqrt(0.25 / n));
  CHECK_THROWS_AS(round(2.5, e2m1(), RoundingKind::Stochastic), std::invalid_argument);
}

TEST_CASE("SR is unbiased between neighbours") {
  RandomStream pick(2024);
  for (int trial = 0; trial < 6; ++trial) {
    const FloatFormat& f = format_by_name(format_names()[trial % format_names().size()]);
    const auto g = f.grid();
    const std::size_t k = g.size() / 2 + static_cast<std::size_t>(pick.uniform() * (g.size() / 2 - 1));
    const double a = g[k], b = g[k + 1];
    const double x = a + (b - a) * (0.05 + 0.9 * pick.uniform());
    RandomStream rng(trial);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += round_value(x, f, RoundingKind::Stochastic, &rng);
    CHECK(std::abs(sum / n - x) < 4 * (b - a) / std::sqrt(double(n)));
  }
}

TEST_CASE("format registry") {
  CHECK(&format_by_name("E4M3") == &e4m3());
  CHECK(&format_by_name("E5M3") == &ue5m3());
  try {
    format_by_name("E3M2");
    FAIL("expected UnknownFormat");
  } catch (const UnknownFormat& e) {
    CHECK(std::string(e.what()).find("UE5M3") != std::string::npos);
  }
  CHECK(parse_rounding_kind("RTN") == RoundingKind::TiesToEven);
  CHECK_THROWS(parse_rounding_kind("up"));
}
