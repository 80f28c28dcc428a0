// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mxsim/matrix.hpp"

namespace mxsim {

enum class HadamardMode { None, All, BackwardOnly };

std::string_view to_string(HadamardMode mode);
/// Accepts "None", "all", "backward" (any case).
HadamardMode parse_hadamard_mode(std::string_view name);

struct HadamardSpec {
  std::size_t block_size = 32;  // power of two
  std::uint64_t seed = 0;
  HadamardMode mode = HadamardMode::None;
};

bool is_power_of_two(std::size_t n);

/// Normalized Sylvester Hadamard matrix, entries +-1/sqrt(l).
Matrix sylvester(std::size_t l);

/// Rademacher diagonal for one block; a pure function of (seed, block_index).
std::vector<int> sign_diagonal(std::uint64_t seed, std::size_t block_index, std::size_t l);

/// y = H S x in place (fast Walsh-Hadamard, O(l log l)).
void apply_transform(std::span<double> block, const HadamardSpec& spec, std::size_t block_index);
/// x = S H y in place; exact inverse of apply_transform in real arithmetic.
void invert_transform(std::span<double> block, const HadamardSpec& spec, std::size_t block_index);

/// Transforms every row block-wise along the columns. Column block j uses
/// block_index j in every row, so two operands transformed with the same
/// spec keep their row dot products. A trailing partial block is left as is.
Matrix transform_rows(const Matrix& m, const HadamardSpec& spec);
Matrix invert_rows(const Matrix& m, const HadamardSpec& spec);

}  // namespace mxsim
