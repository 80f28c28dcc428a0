// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

// Loader for tests/data/reference_results.csv: published result-table rows
// with their configuration columns, complexity and score cells.

#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mxsim/sweep.hpp"

#ifndef MXSIM_TEST_DATA_DIR
#define MXSIM_TEST_DATA_DIR "tests/data"
#endif

namespace reference {

struct Row {
  std::map<std::string, std::string> cells;
  std::string table, dataset, source;
  double val = 0.0;
  bool baseline = false;

  std::string label() const { return table + "/" + dataset + "/" + source + "/" + cells.at("Scale"); }
};

inline std::vector<Row> load(const std::string& path = MXSIM_TEST_DATA_DIR "/reference_results.csv") {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  const auto header = mxsim::split_csv_line(line);
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = mxsim::split_csv_line(line);
    Row r;
    for (std::size_t i = 0; i < header.size(); ++i) r.cells[header[i]] = f.at(i);
    r.table = r.cells["Table"];
    r.dataset = r.cells["Dataset"];
    r.source = r.cells["Source"];
    r.val = std::stod(r.cells["Val loss"]);
    r.baseline = r.source == "Baseline";
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Rows of the four tables scored against dataset baselines.
inline bool scored_table(const std::string& t) {
  return t == "experimental" || t == "llm" || t == "additional" || t == "ue5m3";
}

/// Minimum baseline validation loss per (table, dataset).
inline std::map<std::string, double> baseline_minima(const std::vector<Row>& rows) {
  std::map<std::string, std::vector<double>> vals;
  for (const auto& r : rows)
    if (r.baseline) vals[r.table + "/" + r.dataset].push_back(r.val);
  std::map<std::string, double> out;
  for (const auto& [k, v] : vals) out[k] = mxsim::reference_loss(v);
  return out;
}

/// Whether `published` is reachable from the rounded inputs: the score
/// interval over val +- 0.0005 and m_ref +- 0.0005, widened by `tol`.
inline bool score_within(double published, double val, double m_ref, double omega, double tol,
                         double* point = nullptr) {
  double lo = 1e300, hi = -1e300;
  for (double dv : {-0.0005, 0.0, 0.0005})
    for (double dr : {-0.0005, 0.0, 0.0005}) {
      const double s = mxsim::score(m_ref + dr, val + dv, omega);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  if (point) *point = mxsim::score(m_ref, val, omega);
  return published >= lo - tol && published <= hi + tol;
}

}  // namespace reference
