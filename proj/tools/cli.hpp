// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mxsim/matrix.hpp"

namespace mxsim::cli {

/// Entry point of the mxsim tool. Returns 0 on success, 2 on a usage or
/// config error and 1 on a runtime failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Raw tensor input: binary float32 little-endian (uint32 ndim, uint32 dims,
/// then data) or CSV with one tensor row per line. The last dim is the row
/// length; leading dims are flattened into rows.
struct TensorFile {
  std::vector<std::size_t> shape;
  Matrix data;
};

TensorFile read_tensor_file(const std::string& path);
void write_tensor_f32(const std::string& path, const std::vector<std::size_t>& shape, const Matrix& m);

}  // namespace mxsim::cli
