// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "mxsim/config.hpp"
#include "mxsim/minifloat.hpp"
#include "mxsim/mx_quant.hpp"
#include "mxsim/qgrad.hpp"
#include "mxsim/sweep.hpp"
#include "mxsim/trainer.hpp"
#include "svg.hpp"

namespace mxsim::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad flag values; reported like config errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::vector<std::string> formats;
  std::optional<std::size_t> block_size;
};

std::uint64_t effective_seed(const Common& c) {
  if (const char* env = std::getenv("MXSIM_SEED"); env && *env) {
    try {
      return parse_u64(env);
    } catch (const std::exception& e) {
      throw UsageError(fmt::format("MXSIM_SEED: {}", e.what()));
    }
  }
  return c.seed;
}

fs::path out_path(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return fs::path(c.out) / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + p.string());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

KeyValueFile load_config(const Common& c) {
  if (c.config.empty()) {
    std::istringstream empty;
    return KeyValueFile::parse(empty, "<defaults>");
  }
  return KeyValueFile::load(c.config);
}

void check_formats(const std::vector<std::string>& names) {
  for (const auto& n : names) format_by_name(n);
}

std::uint32_t read_u32le(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
  return v;
}

// ---------------------------------------------------------------- quantize

int cmd_quantize(const Common& c, const std::string& input, const std::string& rounding,
                 const std::string& nan_mode, bool tensor_scaling, const std::string& z, double beta,
                 std::ostream& out) {
  BlockSpec spec;
  const std::string fmt_name = c.formats.empty() ? "E8M0" : c.formats.front();
  if (c.formats.size() > 1) throw UsageError("quantize takes a single --format");
  spec.scale_format = &format_by_name(fmt_name);
  spec.block_size = c.block_size.value_or(fmt_name == "E8M0" ? 32 : 16);
  try {
    spec.scale_rounding = parse_rounding_kind(rounding);
    spec.zero_mode = parse_zero_scale_mode(nan_mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (z == "lse") {
    spec.z = {ZKind::LogSumExp, beta};
  } else if (z != "absmax") {
    throw UsageError(fmt::format("unknown Z function '{}' (valid: absmax, lse)", z));
  }

  const TensorFile tf = read_tensor_file(input);
  TensorQuantOptions opts;
  opts.tensor_scaling = tensor_scaling;
  opts.seed = effective_seed(c);
  QuantizedTensor qt = quantize_tensor(tf.data, spec, opts);
  qt.shape = tf.shape;
  const Matrix f = dequantize_tensor(qt);

  double max_abs = 0.0, sum_abs = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double e = std::abs(tf.data.flat()[i] - f.flat()[i]);
    max_abs = std::max(max_abs, e);
    sum_abs += e;
  }
  const auto [mean_rel, median_rel] = relative_error_stats(tf.data, f);
  const std::string stem = fs::path(input).stem().string();

  const auto bytes = serialize(qt);
  write_text(out_path(c, stem + ".mxqt"), std::string(bytes.begin(), bytes.end()));
  std::string csv;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    for (std::size_t k = 0; k < f.cols(); ++k) csv += fmt::format("{}{:.17g}", k ? "," : "", f(r, k));
    csv += '\n';
  }
  write_text(out_path(c, stem + ".dequant.csv"), csv);
  const json summary = {{"input", input},
                        {"shape", tf.shape},
                        {"scale_format", fmt_name},
                        {"block_size", spec.block_size},
                        {"blocks", qt.block_count()},
                        {"tensor_scaling", tensor_scaling},
                        {"max_abs_err", max_abs},
                        {"mean_abs_err", f.size() ? sum_abs / static_cast<double>(f.size()) : 0.0},
                        {"mean_rel_err", mean_rel},
                        {"median_rel_err", median_rel}};
  write_text(out_path(c, stem + ".summary.json"), summary.dump(2) + "\n");
  out << fmt::format("{} elements in {} blocks ({} l={}): max abs err {:.6g}, mean abs err {:.6g}, mean rel err {:.6g}\n",
                     f.size(), qt.block_count(), fmt_name, spec.block_size, max_abs,
                     summary["mean_abs_err"].get<double>(), mean_rel);
  return 0;
}

// ------------------------------------------------------------------ recon

int cmd_recon(const Common& c, std::ostream& out) {
  const KeyValueFile f = load_config(c);
  f.require_known({"formats", "block_sizes", "scales", "betas", "rows", "cols", "tensor_scaling"});
  ReconSpec spec;
  spec.scales = ReconSpec::default_scales();
  spec.betas = ReconSpec::default_betas();
  auto list = [&](const char* key, auto& dst, auto&& fn) {
    if (const auto* e = f.find(key)) {
      using T = typename std::decay_t<decltype(dst)>::value_type;
      dst = convert_values<T>(f, *e, fn);
    }
  };
  auto one = [&](const char* key, auto& dst, auto&& fn) {
    if (const auto* e = f.find(key)) {
      if (e->values.size() != 1) throw ConfigError(f.source(), e->line, e->key, "expected one value");
      dst = convert_values<std::decay_t<decltype(dst)>>(f, *e, fn).front();
    }
  };
  list("formats", spec.formats, [](const std::string& v) {
    format_by_name(v);
    return v;
  });
  list("block_sizes", spec.block_sizes, [](const std::string& v) {
    const auto b = static_cast<std::size_t>(parse_u64(v));
    if (b == 0) throw std::invalid_argument("block size must be positive");
    return b;
  });
  list("scales", spec.scales, [](const std::string& v) {
    const double s = parse_double(v);
    if (!(s > 0.0)) throw std::invalid_argument("scales must be positive");
    return s;
  });
  list("betas", spec.betas, [](const std::string& v) {
    if (v == "inf" || v == "absmax") return std::numeric_limits<double>::infinity();
    const double b = parse_double(v);
    if (!(b > 0.0)) throw std::invalid_argument("beta must be positive");
    return b;
  });
  one("rows", spec.rows, [](const std::string& v) { return static_cast<std::size_t>(parse_u64(v)); });
  one("cols", spec.cols, [](const std::string& v) { return static_cast<std::size_t>(parse_u64(v)); });
  one("tensor_scaling", spec.tensor_scaling, [](const std::string& v) { return parse_bool(v); });
  if (!c.formats.empty()) spec.formats = c.formats;
  if (c.block_size) spec.block_sizes = {*c.block_size};
  if (spec.rows * spec.cols > (std::size_t{1} << 20)) throw UsageError("recon tensors are limited to 2^20 elements");
  spec.seed = effective_seed(c);
  spec.threads = c.jobs;

  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = recon_error_experiment(spec);
  std::ostringstream csv;
  write_recon_csv(csv, rows);
  const fs::path p = out_path(c, "recon.csv");
  write_text(p, csv.str());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << fmt::format("{} cells written to {} ({:.2f} s)\n", rows.size(), p.string(), secs);
  return 0;
}

// ----------------------------------------------------------- train, sweep

SweepFile load_sweep(const Common& c) {
  SweepFile sf = parse_sweep_file(load_config(c));
  if (!c.formats.empty()) sf.grid.scale_formats = c.formats;
  if (c.block_size) sf.grid.block_sizes = {*c.block_size};
  if (std::getenv("MXSIM_SEED") || c.seed != 0) sf.train.seed = effective_seed(c);
  return sf;
}

json record_json(const RunRecord& r) {
  return {{"final_train_loss", r.final_train()}, {"final_val_loss", r.final_val()},
          {"initial_loss", r.initial_loss},      {"epochs", r.train_loss.size()},
          {"diverged", r.diverged},              {"steps", r.steps},
          {"skipped_steps", r.skipped_steps},    {"final_loss_scale", r.final_loss_scale}};
}

int cmd_train(const Common& c, bool disabled, std::ostream& out) {
  const SweepFile sf = load_sweep(c);
  const Enumeration en = enumerate_configs(sf.grid);
  if (en.configs.size() != 1)
    throw UsageError(fmt::format("train needs exactly one configuration; the config describes {}", en.configs.size()));
  const QuantConfig& qc = en.configs.front();
  TrainConfig tc;
  try {
    tc = to_train_config(qc, sf.train);
    make_optimizer(tc.optimizer, tc.adam);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (disabled) {
    tc.layer.mode = QuantMode::Disabled;
    tc.layer.hadamard.mode = HadamardMode::None;
  }
  const Dataset data = make_dataset(sf.task);
  const RunRecord rec = train(data, tc);
  std::ostringstream hist;
  write_history_csv(hist, rec);
  write_text(out_path(c, "history.csv"), hist.str());
  json summary = record_json(rec);
  summary["dataset"] = sf.dataset_name;
  summary["config"] = disabled ? std::string("disabled") : qc.id();
  summary["complexity_points"] = disabled ? 0.0 : complexity_points(qc);
  summary["seed"] = tc.seed;
  write_text(out_path(c, "train_summary.json"), summary.dump(2) + "\n");
  out << fmt::format("{}: train {:.6g}, val {:.6g} after {} epochs{} ({:.1f} s)\n",
                     summary["config"].get<std::string>(), rec.final_train(), rec.final_val(),
                     rec.train_loss.size(), rec.diverged ? ", diverged" : "", rec.seconds);
  return 0;
}

int cmd_sweep(const Common& c, std::ostream& out, std::ostream& err) {
  const SweepFile sf = load_sweep(c);
  const Enumeration en = enumerate_configs(sf.grid);
  out << fmt::format("grid: {} combinations, {} dropped by constraints, {} to run\n", en.raw, en.dropped,
                     en.configs.size());
  const Dataset data = make_dataset(sf.task);

  double m_ref = 0.0;
  if (sf.reference_loss) {
    m_ref = *sf.reference_loss;
  } else {
    TrainConfig b = sf.train;
    b.layer.mode = QuantMode::Disabled;
    b.layer.hadamard.mode = HadamardMode::None;
    const RunRecord rec = train(data, b);
    if (rec.diverged || !std::isfinite(rec.final_val()))
      throw std::runtime_error("baseline run diverged; set reference_loss or lower lr");
    m_ref = reference_loss({rec.final_val()});
    out << fmt::format("baseline val loss {:.6g}\n", m_ref);
  }

  std::size_t done = 0;
  const auto outcomes = run_sweep(en.configs, data, sf.train, c.jobs, [&](const RunOutcome& o) {
    ++done;
    if (o.record)
      out << fmt::format("[{}/{}] {} val {:.6g}\n", done, en.configs.size(), o.config.id(), o.record->final_val());
    else
      err << fmt::format("[{}/{}] {} skipped: {}\n", done, en.configs.size(), o.config.id(), o.error);
  });

  // Written in config order so the file does not depend on --jobs.
  std::ostringstream csv;
  write_result_header(csv);
  std::size_t ran = 0;
  for (const auto& o : outcomes) {
    if (!o.record) continue;
    ++ran;
    ResultRow r;
    r.dataset = sf.dataset_name;
    r.config = o.config;
    r.val_loss = o.record->final_val();
    r.train_loss = o.record->final_train();
    r.omega = complexity_points(o.config);
    r.score = score(m_ref, r.val_loss, r.omega);
    r.diverged = o.record->diverged;
    write_result_row(csv, r);
  }
  write_text(out_path(c, "results.csv"), csv.str());
  const json summary = {{"dataset", sf.dataset_name}, {"reference_loss", m_ref},
                        {"raw", en.raw},               {"dropped", en.dropped},
                        {"ran", ran},                  {"failed", outcomes.size() - ran}};
  write_text(out_path(c, "sweep_summary.json"), summary.dump(2) + "\n");
  if (ran == 0 && !outcomes.empty()) {
    err << "no configuration could be run\n";
    return 1;
  }
  return 0;
}

// ------------------------------------------------------------ pareto, plot

std::vector<ResultRow> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto rows = read_results(in);
  if (rows.empty()) throw std::runtime_error(path + ": no result rows");
  return rows;
}

svg::Chart pareto_chart(const std::vector<ResultRow>& rows, const std::vector<ParetoPoint>& front) {
  svg::Chart ch{"Score vs complexity", "complexity points", "score"};
  svg::Series all{"configs"}, line{"frontier"}, marks{"frontier points"};
  all.markers = true;
  line.highlight = marks.highlight = marks.markers = true;
  for (const auto& r : rows) {
    all.x.push_back(r.omega);
    all.y.push_back(r.score);
  }
  for (const auto& p : front) {
    line.x.push_back(p.omega);
    line.y.push_back(p.score);
  }
  marks.x = line.x;
  marks.y = line.y;
  ch.series = {all, line, marks};
  return ch;
}

std::vector<ParetoPoint> front_of(const std::vector<ResultRow>& rows) {
  std::vector<ParetoPoint> pts;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (std::isfinite(rows[i].score)) pts.push_back({rows[i].omega, rows[i].score, i});
  if (pts.empty()) throw std::runtime_error("no finite scores");
  return pareto_front(pts);
}

int cmd_pareto(const Common& c, const std::string& input, std::ostream& out) {
  const auto rows = load_results(input);
  const auto front = front_of(rows);
  std::ostringstream csv;
  write_result_header(csv);
  for (const auto& p : front) write_result_row(csv, rows[p.index]);
  write_text(out_path(c, "pareto.csv"), csv.str());
  write_text(out_path(c, "pareto.svg"), svg::render(pareto_chart(rows, front)));
  out << fmt::format("{} of {} configurations on the frontier\n", front.size(), rows.size());
  return 0;
}

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path, std::vector<std::string>* header) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  *header = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != header->size()) throw std::runtime_error(path + ": ragged row");
    rows.push_back(std::move(f));
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name, const std::string& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::runtime_error(fmt::format("{}: missing column '{}'", path, name));
  return static_cast<std::size_t>(it - header.begin());
}

double cell_value(const std::string& s) { return s == "inf" ? INFINITY : std::stod(s); }

void plot_loss(const Common& c, const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw UsageError("plot loss needs history CSV files");
  svg::Chart ch{"Loss", "epoch", "loss"};
  ch.log_y = true;
  for (const auto& path : inputs) {
    std::vector<std::string> h;
    const auto rows = read_csv_rows(path, &h);
    const auto ie = column(h, "epoch", path), it = column(h, "train_loss", path), iv = column(h, "val_loss", path);
    const std::string stem = fs::path(path).parent_path().filename().string() + "/" + fs::path(path).stem().string();
    svg::Series tr{stem + " train"}, va{stem + " val"};
    for (const auto& r : rows) {
      tr.x.push_back(cell_value(r[ie]));
      tr.y.push_back(cell_value(r[it]));
      va.x.push_back(cell_value(r[ie]));
      va.y.push_back(cell_value(r[iv]));
    }
    ch.series.push_back(std::move(tr));
    ch.series.push_back(std::move(va));
  }
  write_text(out_path(c, "loss.svg"), svg::render(ch));
}

void plot_quantizer(const Common& c, double clip_min) {
  const FloatFormat& f = e2m1();
  svg::Chart q{"Approximations of Q on E2M1", "x", "Q(x)"};
  svg::Chart g{"Derivatives of the approximations", "x", "Q'(x)"};
  svg::Series rtn{"round to nearest"}, spline{"spline"}, base{"power (w=5)"}, sig{"sigmoid (T=1)"};
  svg::Series dspline{fmt::format("spline, clipped at {:g}", clip_min)}, dbase{"power (w=5)"}, dsig{"sigmoid (T=1)"};
  const int n = 1400;
  for (int i = 0; i <= n; ++i) {
    const double x = -7.0 + 14.0 * i / n;
    for (auto* s : {&rtn, &spline, &base, &sig, &dspline, &dbase, &dsig}) s->x.push_back(x);
    rtn.y.push_back(round_value(x, f, RoundingKind::TiesToEven));
    spline.y.push_back(q_spline(x, f));
    base.y.push_back(q_baseline(x, f, 5));
    sig.y.push_back(q_sigmoid(x, f, 1.0));
    dspline.y.push_back(q_spline_grad(x, f, clip_min));
    dbase.y.push_back(std::min(q_baseline_grad(x, f, 5), 10.0));
    dsig.y.push_back(q_sigmoid_grad(x, f, 1.0));
  }
  q.series = {rtn, spline, base, sig};
  g.series = {dspline, dbase, dsig};
  write_text(out_path(c, "quantizer.svg"), svg::render(q));
  write_text(out_path(c, "quantizer_grad.svg"), svg::render(g));
}

void plot_deviation(const Common& c) {
  std::vector<std::string> names = c.formats.empty() ? std::vector<std::string>{"E8M0", "E4M3", "UE5M3"} : c.formats;
  svg::Chart ch{"Relative deviation of the quantized scale", "s", "s / s_q"};
  ch.log_x = true;
  const int n = 10000;
  auto add = [&](const std::string& name, RoundingKind mode) {
    BlockSpec spec;
    spec.scale_format = &format_by_name(name);
    spec.scale_rounding = mode;
    svg::Series s{fmt::format("{} {}", name, to_string(mode))};
    for (int i = 0; i < n; ++i) {
      const double v = std::pow(10.0, -4.0 + 8.0 * i / (n - 1));
      s.x.push_back(v);
      s.y.push_back(v / quantize_scale(v, spec));
    }
    ch.series.push_back(std::move(s));
  };
  for (const auto& name : names) add(name, RoundingKind::TiesToEven);
  add(names.front(), RoundingKind::TowardPositive);
  write_text(out_path(c, "deviation.svg"), svg::render(ch));
}

void plot_recon(const Common& c, const std::vector<std::string>& inputs) {
  if (inputs.size() != 1) throw UsageError("plot recon needs one recon CSV file");
  const std::string& path = inputs.front();
  std::vector<std::string> h;
  const auto rows = read_csv_rows(path, &h);
  const auto fi = column(h, "format", path), li = column(h, "l", path), si = column(h, "scale", path),
             bi = column(h, "beta", path), mi = column(h, "mean_rel_err", path);
  // Block-size sweep at unit scale, and scale sweep at the smallest block
  // of at least 16, both with the absmax Z when present.
  std::map<std::string, svg::Series> by_l, by_scale;
  std::vector<double> ls;
  for (const auto& r : rows) ls.push_back(cell_value(r[li]));
  std::sort(ls.begin(), ls.end());
  const auto pick = std::lower_bound(ls.begin(), ls.end(), 16.0);
  const double l_ref = pick != ls.end() ? *pick : ls.back();
  double beta_ref = -1.0;
  for (const auto& r : rows) beta_ref = std::max(beta_ref, cell_value(r[bi]));
  double scale_ref = 0.0;
  for (const auto& r : rows) {
    const double s = cell_value(r[si]);
    if (scale_ref == 0.0 || std::abs(std::log(s)) < std::abs(std::log(scale_ref))) scale_ref = s;
  }
  for (const auto& r : rows) {
    if (cell_value(r[bi]) != beta_ref) continue;
    const std::string& fmt_name = r[fi];
    if (cell_value(r[si]) == scale_ref) {
      auto& s = by_l[fmt_name];
      s.label = fmt_name;
      s.x.push_back(cell_value(r[li]));
      s.y.push_back(cell_value(r[mi]));
    }
    if (cell_value(r[li]) == l_ref) {
      auto& s = by_scale[fmt_name];
      s.label = fmt_name;
      s.x.push_back(cell_value(r[si]));
      s.y.push_back(cell_value(r[mi]));
    }
  }
  svg::Chart a{fmt::format("Reconstruction error vs block size (scale {:g})", scale_ref), "block size",
               "mean relative error"};
  a.log_x = a.log_y = true;
  svg::Chart b{fmt::format("Reconstruction error vs tensor scale (l={:g})", l_ref), "tensor scale",
               "mean relative error"};
  b.log_x = b.log_y = true;
  for (auto& [k, s] : by_l) a.series.push_back(s);
  for (auto& [k, s] : by_scale) b.series.push_back(s);
  write_text(out_path(c, "recon_block.svg"), svg::render(a));
  write_text(out_path(c, "recon_scale.svg"), svg::render(b));
}

int cmd_plot(const Common& c, const std::string& kind, const std::vector<std::string>& inputs, double clip_min,
             std::ostream& out) {
  if (kind == "loss") {
    plot_loss(c, inputs);
  } else if (kind == "pareto") {
    if (inputs.size() != 1) throw UsageError("plot pareto needs one results CSV file");
    const auto rows = load_results(inputs.front());
    write_text(out_path(c, "pareto.svg"), svg::render(pareto_chart(rows, front_of(rows))));
  } else if (kind == "quantizer") {
    plot_quantizer(c, clip_min);
  } else if (kind == "deviation") {
    check_formats(c.formats);
    plot_deviation(c);
  } else if (kind == "recon") {
    plot_recon(c, inputs);
  } else {
    throw UsageError(fmt::format("unknown plot '{}' (valid: loss, pareto, quantizer, deviation, recon)", kind));
  }
  out << fmt::format("{} plot written to {}\n", kind, c.out);
  return 0;
}

}  // namespace

TensorFile read_tensor_file(const std::string& path) {
  const std::string bytes = read_text(path);
  TensorFile tf;
  if (fs::path(path).extension() == ".csv") {
    std::istringstream in(bytes);
    std::string line;
    std::vector<double> vals;
    std::size_t rows = 0, cols = 0, lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::vector<double> row;
      bool numeric = true;
      for (const auto& f : split_csv_line(line)) {
        try {
          std::size_t used = 0;
          row.push_back(std::stod(f, &used));
          if (used != f.size()) numeric = false;
        } catch (const std::exception&) {
          numeric = false;
        }
      }
      if (!numeric) {
        if (rows == 0 && lineno == 1) continue;  // header
        throw std::runtime_error(fmt::format("{}:{}: not a number", path, lineno));
      }
      if (rows == 0) cols = row.size();
      if (row.size() != cols) throw std::runtime_error(fmt::format("{}:{}: expected {} values", path, lineno, cols));
      vals.insert(vals.end(), row.begin(), row.end());
      ++rows;
    }
    if (rows == 0) throw std::runtime_error(path + ": no data");
    tf.shape = {rows, cols};
    tf.data = Matrix(rows, cols, std::move(vals));
    return tf;
  }
  if (bytes.size() < 4) throw std::runtime_error(path + ": truncated header");
  const std::uint32_t ndim = read_u32le(bytes, 0);
  if (ndim == 0 || ndim > 8) throw std::runtime_error(fmt::format("{}: bad rank {}", path, ndim));
  if (bytes.size() < 4 + 4 * std::size_t{ndim}) throw std::runtime_error(path + ": truncated header");
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    tf.shape.push_back(read_u32le(bytes, 4 + 4 * i));
    count *= tf.shape.back();
  }
  const std::size_t off = 4 + 4 * std::size_t{ndim};
  if (bytes.size() != off + 4 * count)
    throw std::runtime_error(fmt::format("{}: expected {} float32 values", path, count));
  if (count == 0) throw std::runtime_error(path + ": empty tensor");
  std::vector<double> vals(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = read_u32le(bytes, off + 4 * i);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    vals[i] = v;
  }
  const std::size_t cols = tf.shape.back();
  tf.data = Matrix(count / cols, cols, std::move(vals));
  return tf;
}

void write_tensor_f32(const std::string& path, const std::vector<std::size_t>& shape, const Matrix& m) {
  std::string bytes;
  auto put = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes += static_cast<char>((v >> (8 * i)) & 0xff);
  };
  put(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) put(static_cast<std::uint32_t>(d));
  for (double v : m.flat()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put(bits);
  }
  write_text(path, bytes);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Microscaling FP4 quantization simulator"};
  app.name("mxsim");
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out", c.out, "output directory")->capture_default_str();
  app.add_option("--seed", c.seed, "seed (MXSIM_SEED overrides)");
  app.add_option("--jobs", c.jobs, "concurrent runs or threads")->check(CLI::PositiveNumber);
  app.add_option("--format", c.formats, "scale format name(s)");
  app.add_option("--block-size", c.block_size, "block size")->check(CLI::IsMember({16, 32}));

  std::string input, rounding = "TiesToEven", nan_mode = "nearest_subnormal", z = "absmax";
  bool tensor_scaling = false, disabled = false;
  double beta = 40.0, clip_min = 0.05;
  std::string plot_kind;
  std::vector<std::string> plot_inputs;

  auto* quantize = app.add_subcommand("quantize", "quantize a tensor file");
  quantize->add_option("input", input, "tensor file (.csv or binary float32)")->required();
  quantize->add_option("--scale-rounding", rounding, "TiesToEven, TowardPositive or Stochastic");
  quantize->add_option("--nan-mode", nan_mode, "nearest_subnormal or to_one");
  quantize->add_option("--z", z, "absmax or lse");
  quantize->add_option("--beta", beta, "LogSumExp inverse temperature");
  quantize->add_flag("--tensor-scaling", tensor_scaling, "normalize by the largest block statistic");
  auto* recon = app.add_subcommand("recon", "reconstruction-error grid");
  auto* trn = app.add_subcommand("train", "train one configuration");
  trn->add_flag("--disabled", disabled, "train without quantization");
  auto* sweep = app.add_subcommand("sweep", "run a configuration grid");
  auto* pareto = app.add_subcommand("pareto", "frontier of a results CSV");
  pareto->add_option("results", input, "results CSV")->required()->check(CLI::ExistingFile);
  auto* plot = app.add_subcommand("plot", "render SVG figures");
  plot->add_option("kind", plot_kind, "loss, pareto, quantizer, deviation or recon")->required();
  plot->add_option("inputs", plot_inputs, "input CSV files");
  plot->add_option("--clip-min", clip_min, "spline slope floor for the quantizer plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    check_formats(c.formats);
    if (*quantize) return cmd_quantize(c, input, rounding, nan_mode, tensor_scaling, z, beta, out);
    if (*recon) return cmd_recon(c, out);
    if (*trn) return cmd_train(c, disabled, out);
    if (*sweep) return cmd_sweep(c, out, err);
    if (*pareto) return cmd_pareto(c, input, out);
    if (*plot) return cmd_plot(c, plot_kind, plot_inputs, clip_min, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const UnknownFormat& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace mxsim::cli
