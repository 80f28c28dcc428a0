// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace mxsim::svg {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  bool log = false;
  double lo = 0.0, hi = 1.0;

  bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
  double t(double v) const { return log ? std::log10(v) : v; }
  double frac(double v) const { return hi > lo ? (t(v) - lo) / (hi - lo) : 0.5; }

  void fit(const std::vector<double>& vals) {
    double a = std::numeric_limits<double>::infinity(), b = -a;
    for (double v : vals) {
      if (!usable(v)) continue;
      a = std::min(a, t(v));
      b = std::max(b, t(v));
    }
    if (!std::isfinite(a)) a = 0.0, b = 1.0;
    if (a == b) a -= 0.5, b += 0.5;
    const double pad = 0.04 * (b - a);
    lo = a - pad;
    hi = b + pad;
  }

  // Tick positions in transformed units.
  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      const double step = std::max(1.0, std::ceil((hi - lo) / 8.0));
      for (double e = std::ceil(lo / step) * step; e <= hi; e += step) out.push_back(e);
      return out;
    }
    const double raw = (hi - lo) / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {2.0, 5.0, 10.0})
      if (raw > step) step = m * mag;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * step; v += step)
      out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    return out;
  }

  std::string label(double tick) const { return log ? fmt::format("1e{:g}", tick) : fmt::format("{:g}", tick); }
};

}  // namespace

std::string render(const Chart& c) {
  const double left = 70, right = 160, top = 40, bottom = 50;
  const double pw = c.width - left - right, ph = c.height - top - bottom;
  Axis ax{c.log_x}, ay{c.log_y};
  std::vector<double> xs, ys;
  for (const auto& s : c.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  ax.fit(xs);
  ay.fit(ys);
  auto px = [&](double v) { return left + ax.frac(v) * pw; };
  auto py = [&](double v) { return top + (1.0 - ay.frac(v)) * ph; };

  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      c.width, c.height, c.width, c.height);
  out += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     left + pw / 2, escape(c.title));
  out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"black\"/>\n",
                     left, top, pw, ph);
  for (double t : ax.ticks()) {
    const double x = left + (t - ax.lo) / (ax.hi - ax.lo) * pw;
    out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"#ddd\"/>\n"
                       "<text x=\"{0:.1f}\" y=\"{3:.1f}\" text-anchor=\"middle\">{4}</text>\n",
                       x, top, top + ph, top + ph + 15, ax.label(t));
  }
  for (double t : ay.ticks()) {
    const double y = top + (1.0 - (t - ay.lo) / (ay.hi - ay.lo)) * ph;
    out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"#ddd\"/>\n"
                       "<text x=\"{3:.1f}\" y=\"{4:.1f}\" text-anchor=\"end\">{5}</text>\n",
                       left, y, left + pw, left - 5, y + 4, ay.label(t));
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2,
                     static_cast<double>(c.height) - 12, escape(c.x_label));
  out += fmt::format("<text x=\"16\" y=\"{0:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1f})\">{1}</text>\n",
                     top + ph / 2, escape(c.y_label));

  for (std::size_t k = 0; k < c.series.size(); ++k) {
    const auto& s = c.series[k];
    const char* color = s.highlight ? "#d62728" : kPalette[k % std::size(kPalette)];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.markers) {
      const double r = s.highlight ? 4.0 : 2.5;
      for (std::size_t i = 0; i < n; ++i) {
        if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) continue;
        out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{}\" fill=\"{}\" fill-opacity=\"{}\"/>\n",
                           px(s.x[i]), py(s.y[i]), r, color, s.highlight ? "1" : "0.5");
      }
    } else {
      std::string pts;
      auto flush = [&] {
        if (!pts.empty())
          out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"{}\" points=\"{}\"/>\n", color,
                             s.highlight ? 2.0 : 1.5, pts);
        pts.clear();
      };
      for (std::size_t i = 0; i < n; ++i) {
        if (!ax.usable(s.x[i]) || !ay.usable(s.y[i])) {
          flush();
          continue;
        }
        if (!pts.empty()) pts += ' ';
        pts += fmt::format("{:.2f},{:.2f}", px(s.x[i]), py(s.y[i]));
      }
      flush();
    }
    const double ly = top + 10 + 16.0 * static_cast<double>(k);
    out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n"
                       "<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n",
                       left + pw + 10, ly - 9, color, left + pw + 24, ly, escape(s.label));
  }
  out += "</svg>\n";
  return out;
}

}  // namespace mxsim::svg
