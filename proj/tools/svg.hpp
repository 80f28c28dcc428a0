// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal SVG line and scatter charts. Output depends only on the data, so
// identical inputs give byte-identical files.

#pragma once

#include <string>
#include <utility>
#include <vector>

namespace mxsim::svg {

struct Series {
  explicit Series(std::string l = {}) : label(std::move(l)) {}

  std::string label;
  std::vector<double> x, y;
  bool markers = false;  // scatter instead of polyline
  bool highlight = false;
};

struct Chart {
  Chart(std::string t, std::string xl, std::string yl)
      : title(std::move(t)), x_label(std::move(xl)), y_label(std::move(yl)) {}

  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  int width = 640;
  int height = 420;
};

/// Renders the chart. Non-finite points (and non-positive ones on log axes)
/// are skipped; a polyline is split where they occur.
std::string render(const Chart& chart);

}  // namespace mxsim::svg
