// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/hadamard.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

#include "mxsim/random.hpp"

namespace mxsim {

std::string_view to_string(HadamardMode mode) {
  switch (mode) {
    case HadamardMode::None: return "None";
    case HadamardMode::All: return "all";
    case HadamardMode::BackwardOnly: return "backward";
  }
  return "?";
}

HadamardMode parse_hadamard_mode(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "none") return HadamardMode::None;
  if (s == "all") return HadamardMode::All;
  if (s == "backward") return HadamardMode::BackwardOnly;
  throw std::invalid_argument(
      fmt::format("unknown hadamard mode '{}' (valid: None, all, backward)", name));
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace {

void require_pow2(std::size_t l) {
  if (!is_power_of_two(l)) {
    throw std::invalid_argument(fmt::format("Hadamard size {} is not a power of two", l));
  }
}

// Unnormalized in-place Walsh-Hadamard butterfly in Sylvester order.
void fwht(std::span<double> x) {
  for (std::size_t h = 1; h < x.size(); h *= 2) {
    for (std::size_t i = 0; i < x.size(); i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = x[j];
        const double b = x[j + h];
        x[j] = a + b;
        x[j + h] = a - b;
      }
    }
  }
  const double norm = std::sqrt(static_cast<double>(x.size()));
  for (double& v : x) v /= norm;
}

}  // namespace

Matrix sylvester(std::size_t l) {
  require_pow2(l);
  Matrix h(l, l);
  const double norm = std::sqrt(static_cast<double>(l));
  for (std::size_t r = 0; r < l; ++r) {
    for (std::size_t c = 0; c < l; ++c) {
      // Entry sign is (-1)^popcount(r & c).
      const bool neg = __builtin_popcountll(r & c) & 1;
      h(r, c) = (neg ? -1.0 : 1.0) / norm;
    }
  }
  return h;
}

std::vector<int> sign_diagonal(std::uint64_t seed, std::size_t block_index, std::size_t l) {
  RandomStream rng(derive_seed({seed, block_index}));
  std::vector<int> s(l);
  for (auto& v : s) v = rng.rademacher();
  return s;
}

void apply_transform(std::span<double> block, const HadamardSpec& spec, std::size_t block_index) {
  if (block.size() != spec.block_size) {
    throw std::invalid_argument(fmt::format("Hadamard block has {} elements, expected {}",
                                            block.size(), spec.block_size));
  }
  require_pow2(spec.block_size);
  const auto s = sign_diagonal(spec.seed, block_index, block.size());
  for (std::size_t i = 0; i < block.size(); ++i) block[i] *= s[i];
  fwht(block);
}

void invert_transform(std::span<double> block, const HadamardSpec& spec, std::size_t block_index) {
  if (block.size() != spec.block_size) {
    throw std::invalid_argument(fmt::format("Hadamard block has {} elements, expected {}",
                                            block.size(), spec.block_size));
  }
  require_pow2(spec.block_size);
  fwht(block);  // H is symmetric and orthogonal
  const auto s = sign_diagonal(spec.seed, block_index, block.size());
  for (std::size_t i = 0; i < block.size(); ++i) block[i] *= s[i];
}

namespace {

template <typename Fn>
Matrix per_block(const Matrix& m, const HadamardSpec& spec, Fn fn) {
  require_pow2(spec.block_size);
  Matrix out = m;
  const std::size_t l = spec.block_size;
  const std::size_t full = m.cols() / l;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < full; ++j) fn(row.subspan(j * l, l), spec, j);
  }
  return out;
}

}  // namespace

Matrix transform_rows(const Matrix& m, const HadamardSpec& spec) {
  return per_block(m, spec, apply_transform);
}

Matrix invert_rows(const Matrix& m, const HadamardSpec& spec) {
  return per_block(m, spec, invert_transform);
}

}  // namespace mxsim
