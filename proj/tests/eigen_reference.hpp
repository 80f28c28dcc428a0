// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

// Dense ReLU network with an MSE loss and Adam, written against Eigen. It
// shares no code with the library trainer.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mxsim/matrix.hpp"
#include "mxsim/trainer.hpp"

namespace reference {

using EMat = Eigen::Matrix<double, -1, -1, Eigen::RowMajor>;

inline EMat to_eigen(const mxsim::Matrix& m) {
  return Eigen::Map<const EMat>(m.flat().data(), static_cast<long>(m.rows()), static_cast<long>(m.cols()));
}

// Parameters: hidden weights W_1..W_k, head weight, head bias (1 x out).
struct DenseMlp {
  std::vector<EMat> p, m, v;
  long t = 0;
  mxsim::AdamHyper hp;

  void init(const std::vector<mxsim::Matrix>& params, const mxsim::AdamHyper& h) {
    hp = h;
    for (const auto& q : params) {
      p.push_back(to_eigen(q));
      m.push_back(EMat::Zero(p.back().rows(), p.back().cols()));
      v.push_back(EMat::Zero(p.back().rows(), p.back().cols()));
    }
  }

  // One Adam step on a batch; returns the batch loss before the update.
  double step(const EMat& x, const EMat& y) {
    const std::size_t k = p.size() - 2;
    std::vector<EMat> acts{x};
    for (std::size_t i = 0; i < k; ++i) acts.push_back((acts.back() * p[i].transpose()).cwiseMax(0.0));
    EMat out = acts.back() * p[k].transpose();
    out.rowwise() += p[k + 1].row(0);
    const double loss = (out - y).squaredNorm() / static_cast<double>(out.size());
    EMat d = 2.0 * (out - y) / static_cast<double>(out.size());
    std::vector<EMat> g(p.size());
    g[k] = d.transpose() * acts.back();
    g[k + 1] = d.colwise().sum();
    d = d * p[k];
    for (std::size_t i = k; i-- > 0;) {
      d = (d.array() * (acts[i + 1].array() > 0).cast<double>()).matrix();
      g[i] = d.transpose() * acts[i];
      if (i > 0) d = d * p[i];
    }
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1 - hp.beta2) * g[i].cwiseProduct(g[i]);
      const EMat mh = m[i] / (1 - std::pow(hp.beta1, t));
      const EMat vh = v[i] / (1 - std::pow(hp.beta2, t));
      p[i].array() -= hp.lr * mh.array() / (vh.array().sqrt() + hp.eps);
    }
    return loss;
  }
};

}  // namespace reference
