// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "mxsim/mx_quant.hpp"
#include "mxsim/random.hpp"

namespace mxsim {

std::string QuantConfig::id() const {
  return fmt::format("{}-l{}-{}-{}-H{}-{}-SR{}-{}-LS{}-{}-TS{}-{}-{}", scale_format, block_size,
                     to_string(max_approx), to_string(step_grad), to_string(hadamard),
                     to_string(scale_grad), to_string(sr), optimizer, int(loss_scaling),
                     to_string(scale_rounding), int(tensor_scaling), tensor_grad_cell(tensor_grad),
                     to_string(nan_mode));
}

double complexity_points(const QuantConfig& c, const ComplexityWeights& w) {
  double omega = 0.0;
  if (c.max_approx != DzKind::STE) omega += w.smoothing;
  if (c.tensor_grad && *c.tensor_grad != TensorScaleGradMode::Ignore) omega += w.tensor_scale_grad;
  if (c.step_grad != QGradKind::STE) omega += w.step_gradient;
  if (c.hadamard != HadamardMode::None) omega += w.hadamard;
  if (c.scale_grad != QGradKind::STE) omega += w.quantized_gradient;
  if (c.sr != SrPolicy::None) omega += w.sr;
  if (c.tensor_scaling) omega += w.tensor_scaling;
  if (c.loss_scaling) omega += w.loss_scaling;
  if (c.optimizer.find("SPAM") != std::string::npos) omega += w.spam_optimizer;
  if (c.scale_rounding == RoundingKind::Stochastic) omega += w.scale_sr;
  return omega;
}

std::string_view to_string(ScoreRule rule) {
  return rule == ScoreRule::Published ? "published" : "one_plus_omega";
}

ScoreRule parse_score_rule(std::string_view name) {
  if (name == "published") return ScoreRule::Published;
  if (name == "one_plus_omega") return ScoreRule::OnePlusOmega;
  throw std::invalid_argument(fmt::format("unknown score rule '{}' (valid: published, one_plus_omega)", name));
}

double relative_gain(double m_ref, double m_c) {
  if (!(m_ref > 0.0)) throw std::invalid_argument(fmt::format("reference metric must be positive, got {}", m_ref));
  return (m_ref - m_c) / m_ref;
}

double score(double m_ref, double m_c, double omega, ScoreRule rule) {
  const double g = relative_gain(m_ref, m_c);
  if (rule == ScoreRule::OnePlusOmega) return g / (1.0 + omega);
  const double k = std::max(1.0, omega);
  return g >= 0.0 ? g / k : g * k;
}

ScoreReport make_report(const QuantConfig& c, double m_ref, double m_c, ScoreRule rule) {
  ScoreReport r;
  r.config_id = c.id();
  r.m_ref = m_ref;
  r.m_c = m_c;
  r.gain = relative_gain(m_ref, m_c);
  r.omega = complexity_points(c);
  r.score = score(m_ref, m_c, r.omega, rule);
  return r;
}

double reference_loss(const std::vector<double>& baseline_val_losses) {
  if (baseline_val_losses.empty()) throw std::invalid_argument("reference_loss: no baseline runs");
  return *std::min_element(baseline_val_losses.begin(), baseline_val_losses.end());
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  if (points.empty()) throw std::invalid_argument("pareto_front: no records");
  std::vector<ParetoPoint> sorted = points;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.omega != b.omega ? a.omega < b.omega : a.score > b.score;
  });
  // Sweep by omega: a point survives if it beats every score seen at strictly
  // smaller omega and ties the best score at its own omega.
  std::vector<ParetoPoint> front;
  double best_before = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    const double top = sorted[i].score;
    while (j < sorted.size() && sorted[j].omega == sorted[i].omega) {
      if (sorted[j].score == top && top > best_before) front.push_back(sorted[j]);
      ++j;
    }
    best_before = std::max(best_before, top);
    i = j;
  }
  return front;
}

std::size_t SweepGrid::raw_size() const {
  const std::size_t blocks = block_sizes.empty() ? 1 : block_sizes.size();
  return scale_formats.size() * blocks * max_approx.size() * scale_rounding.size() * step_grad.size() *
         scale_grad.size() * tensor_grad.size() * optimizers.size() * loss_scaling.size() *
         tensor_scaling.size() * sr.size() * hadamard.size() * nan_mode.size();
}

Enumeration enumerate_configs(const SweepGrid& g) {
  Enumeration e;
  e.raw = g.raw_size();
  std::vector<std::size_t> blocks = g.block_sizes;
  for (const auto& fmt_name : g.scale_formats) {
    format_by_name(fmt_name);  // validates the name
    const std::vector<std::size_t> bs =
        blocks.empty() ? std::vector<std::size_t>{fmt_name == "E8M0" ? 32u : 16u} : blocks;
    for (auto l : bs)
      for (auto ma : g.max_approx)
        for (auto rm : g.scale_rounding)
          for (auto sg : g.step_grad)
            for (auto qg : g.scale_grad)
              for (std::size_t ti = 0; ti < g.tensor_grad.size(); ++ti)
                for (const auto& opt : g.optimizers)
                  for (bool ls : g.loss_scaling)
                    for (bool ts : g.tensor_scaling)
                      for (auto sr : g.sr)
                        for (auto hm : g.hadamard)
                          for (auto nm : g.nan_mode) {
                            if (!ts && ti > 0) {
                              ++e.dropped;
                              continue;
                            }
                            QuantConfig c;
                            c.scale_format = fmt_name;
                            c.block_size = l;
                            c.max_approx = ma;
                            c.scale_rounding = rm;
                            c.step_grad = sg;
                            c.scale_grad = qg;
                            if (ts) c.tensor_grad = g.tensor_grad[ti];
                            c.optimizer = opt;
                            c.loss_scaling = ls;
                            c.tensor_scaling = ts;
                            c.sr = sr;
                            c.hadamard = hm;
                            c.nan_mode = nm;
                            e.configs.push_back(std::move(c));
                          }
  }
  return e;
}

TrainConfig to_train_config(const QuantConfig& c, const TrainConfig& base) {
  TrainConfig t = base;
  auto& q = t.layer.quant;
  q.spec.scale_format = &format_by_name(c.scale_format);
  q.spec.block_size = c.block_size;
  q.spec.scale_rounding = c.scale_rounding;
  q.spec.zero_mode = c.nan_mode;
  q.scale.dz = c.max_approx;
  q.spec.z = q.scale.forward_z();
  q.elem.kind = c.step_grad;
  q.scale.q_grad.kind = c.scale_grad;
  q.tensor_scaling = c.tensor_scaling;
  q.tensor_grad = c.tensor_grad.value_or(TensorScaleGradMode::Ignore);
  t.layer.mode = QuantMode::Hard;
  t.layer.sr_policy = c.sr;
  t.layer.hadamard.mode = c.hadamard;
  if (c.hadamard != HadamardMode::None) {
    if (!is_power_of_two(c.block_size)) {
      throw std::invalid_argument(fmt::format("Hadamard needs a power-of-two block size, got {}", c.block_size));
    }
    t.layer.hadamard.block_size = c.block_size;
  }
  t.optimizer = c.optimizer;
  t.loss_scaling = c.loss_scaling;
  return t;
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string_view strip_exact(std::string_view s) {
  return ends_with(s, "_exact") ? s.substr(0, s.size() - 6) : s;
}

HadamardMode parse_hadamard_cell(std::string_view s) {
  if (s == "N/A") return HadamardMode::None;
  return parse_hadamard_mode(strip_exact(s));
}

SrPolicy parse_sr_cell(std::string_view s) {
  s = strip_exact(s);
  if (s == "IntelFP4" || s == "backward act.") return SrPolicy::BackwardActivations;
  if (s == "all_activation" || s == "all act.") return SrPolicy::AllActivations;
  return parse_sr_policy(s);
}

std::optional<TensorScaleGradMode> parse_tensor_grad_cell(std::string_view s) {
  if (s == "N/A") return std::nullopt;
  return parse_tensor_scale_grad(s);
}

std::size_t parse_block(std::string_view s) {
  const double v = parse_double(s);
  if (!(v >= 1.0) || v != std::floor(v)) throw std::invalid_argument(fmt::format("bad block size '{}'", s));
  return static_cast<std::size_t>(v);
}

const std::string& cell(const std::map<std::string, std::string>& row, const std::string& key) {
  const auto it = row.find(key);
  if (it == row.end()) throw std::invalid_argument(fmt::format("missing column '{}'", key));
  return it->second;
}

}  // namespace

QuantConfig config_from_table(const std::map<std::string, std::string>& row) {
  QuantConfig c;
  c.scale_format = cell(row, "Scale");
  if (c.scale_format == "E5M3") c.scale_format = "UE5M3";  // unsigned spelling dropped in some tables
  format_by_name(c.scale_format);
  c.block_size = parse_block(cell(row, "Block size"));
  c.max_approx = parse_dz_kind(cell(row, "Max grad."));
  c.step_grad = parse_qgrad_kind(cell(row, "Quant. grad"));
  c.hadamard = parse_hadamard_cell(cell(row, "Hadamard"));
  c.scale_grad = parse_qgrad_kind(cell(row, "Scale grad"));
  c.sr = parse_sr_cell(cell(row, "SR"));
  c.optimizer = cell(row, "Optimiser");
  c.loss_scaling = parse_bool(cell(row, "Loss scaling"));
  c.scale_rounding = parse_rounding_kind(cell(row, "Round mode"));
  c.tensor_scaling = parse_bool(cell(row, "Tensor scaling"));
  c.tensor_grad = parse_tensor_grad_cell(cell(row, "Tensor grad"));
  c.nan_mode = parse_zero_scale_mode(cell(row, "NaN mode"));
  return c;
}

std::string hadamard_cell(HadamardMode m) { return std::string(to_string(m)); }
std::string sr_cell(SrPolicy p) { return std::string(to_string(p)); }
std::string tensor_grad_cell(const std::optional<TensorScaleGradMode>& t) {
  return t ? std::string(to_string(*t)) : "N/A";
}

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {
      "Dataset",    "Val loss",       "Train loss",     "Scale",      "Block size",
      "Max grad.",  "Quant. grad",    "Hadamard",       "Scale grad", "SR",
      "Optimiser",  "Loss scaling",   "Round mode",     "Tensor scaling", "Tensor grad",
      "Complexity points", "Score",   "NaN mode",       "Val loss (bf16)", "Gain sign",
      "Diverged"};
  return cols;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::string cur;
  bool q = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (q) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        q = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      q = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

void write_result_header(std::ostream& os) {
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << csv_field(cols[i]);
  os << '\n';
}

void write_result_row(std::ostream& os, const ResultRow& r) {
  const QuantConfig& c = r.config;
  const std::vector<std::string> cells = {
      r.dataset,
      fmt::format("{:.17g}", r.val_loss),
      fmt::format("{:.17g}", r.train_loss),
      c.scale_format,
      std::to_string(c.block_size),
      std::string(to_string(c.max_approx)),
      std::string(to_string(c.step_grad)),
      hadamard_cell(c.hadamard),
      std::string(to_string(c.scale_grad)),
      sr_cell(c.sr),
      c.optimizer,
      c.loss_scaling ? "True" : "False",
      std::string(to_string(c.scale_rounding)),
      c.tensor_scaling ? "True" : "False",
      tensor_grad_cell(c.tensor_grad),
      fmt::format("{:.3f}", r.omega),
      fmt::format("{:.17g}", r.score),
      std::string(to_string(c.nan_mode)),
      fmt::format("{:.3f}", round_bfloat16(r.val_loss)),
      r.score >= 0.0 ? "pos" : "neg",
      r.diverged ? "True" : "False"};
  for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_field(cells[i]);
  os << '\n';
}

std::vector<ResultRow> read_results(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("results CSV is empty");
  const auto header = split_csv_line(line);
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw std::runtime_error(fmt::format("results CSV line {}: {} fields, header has {}", lineno, f.size(),
                                           header.size()));
    }
    std::map<std::string, std::string> m;
    for (std::size_t i = 0; i < f.size(); ++i) m[header[i]] = f[i];
    try {
      ResultRow r;
      r.dataset = cell(m, "Dataset");
      r.config = config_from_table(m);
      r.val_loss = parse_double(cell(m, "Val loss"));
      r.train_loss = parse_double(cell(m, "Train loss"));
      r.omega = parse_double(cell(m, "Complexity points"));
      r.score = parse_double(cell(m, "Score"));
      if (m.count("Diverged")) r.diverged = parse_bool(m["Diverged"]);
      rows.push_back(std::move(r));
    } catch (const std::exception& ex) {
      throw std::runtime_error(fmt::format("results CSV line {}: {}", lineno, ex.what()));
    }
  }
  return rows;
}

void CsvAppender::append(const ResultRow& r) {
  std::lock_guard lock(mu_);
  write_result_row(os_, r);
  os_.flush();
}

namespace {

template <typename T, typename Fn>
void set_list(const KeyValueFile& f, std::string_view key, std::vector<T>& dst, Fn&& fn) {
  if (const auto* e = f.find(key)) dst = convert_values<T>(f, *e, fn);
}

template <typename T, typename Fn>
void set_one(const KeyValueFile& f, std::string_view key, T& dst, Fn&& fn) {
  const auto* e = f.find(key);
  if (!e) return;
  if (e->values.size() != 1) throw ConfigError(f.source(), e->line, e->key, "expected a single value");
  dst = convert_values<T>(f, *e, fn).front();
}

}  // namespace

SweepFile parse_sweep_file(const KeyValueFile& f) {
  f.require_known({"grid", "scale_format", "block_size", "max_approx", "round_mode", "quant_grad",
                   "scale_grad", "tensor_grad", "optimizer", "loss_scaling", "tensor_scaling", "sr",
                   "hadamard", "nan_mode", "beta", "task", "dataset", "samples", "dim", "classes",
                   "separation", "data_seed", "mnist_images", "mnist_labels", "epochs", "batch_size",
                   "lr", "hidden", "relu", "seed", "val_fraction", "reference_loss", "threads"});
  SweepFile s;
  std::string grid = "single";
  set_one(f, "grid", grid, [](const std::string& v) {
    if (v != "single" && v != "full") throw std::invalid_argument("expected 'single' or 'full'");
    return v;
  });
  if (grid == "single") {
    // Every technique defaults to the plain MXFP4 setting.
    const QuantConfig d;
    s.grid.scale_formats = {d.scale_format};
    s.grid.max_approx = {d.max_approx};
    s.grid.scale_rounding = {d.scale_rounding};
    s.grid.step_grad = {d.step_grad};
    s.grid.scale_grad = {d.scale_grad};
    s.grid.tensor_grad = {TensorScaleGradMode::Ignore};
    s.grid.optimizers = {d.optimizer};
    s.grid.loss_scaling = {d.loss_scaling};
    s.grid.tensor_scaling = {d.tensor_scaling};
    s.grid.sr = {d.sr};
    s.grid.hadamard = {d.hadamard};
  }
  auto& g = s.grid;
  set_list(f, "scale_format", g.scale_formats, [](const std::string& v) {
    format_by_name(v);
    return v;
  });
  set_list(f, "block_size", g.block_sizes, [](const std::string& v) { return parse_block(v); });
  set_list(f, "max_approx", g.max_approx, [](const std::string& v) { return parse_dz_kind(v); });
  set_list(f, "round_mode", g.scale_rounding, [](const std::string& v) { return parse_rounding_kind(v); });
  set_list(f, "quant_grad", g.step_grad, [](const std::string& v) { return parse_qgrad_kind(v); });
  set_list(f, "scale_grad", g.scale_grad, [](const std::string& v) { return parse_qgrad_kind(v); });
  set_list(f, "tensor_grad", g.tensor_grad, [](const std::string& v) { return parse_tensor_scale_grad(v); });
  set_list(f, "optimizer", g.optimizers, [](const std::string& v) { return v; });
  set_list(f, "loss_scaling", g.loss_scaling, [](const std::string& v) { return parse_bool(v); });
  set_list(f, "tensor_scaling", g.tensor_scaling, [](const std::string& v) { return parse_bool(v); });
  set_list(f, "sr", g.sr, [](const std::string& v) { return parse_sr_cell(v); });
  set_list(f, "hadamard", g.hadamard, [](const std::string& v) { return parse_hadamard_cell(v); });
  set_list(f, "nan_mode", g.nan_mode, [](const std::string& v) { return parse_zero_scale_mode(v); });

  auto& t = s.train;
  t.batch_size = 4096;
  t.adam.lr = 1e-2;
  set_one(f, "beta", t.layer.quant.scale.beta, [](const std::string& v) { return parse_double(v); });
  t.layer.quant.spec.z.beta = t.layer.quant.scale.beta;
  set_one(f, "task", s.task.kind, [](const std::string& v) { return parse_task_kind(v); });
  set_one(f, "samples", s.task.samples, [](const std::string& v) { return static_cast<std::size_t>(parse_u64(v)); });
  set_one(f, "dim", s.task.dim, [](const std::string& v) { return static_cast<std::size_t>(parse_u64(v)); });
  set_one(f, "classes", s.task.classes, [](const std::string& v) { return static_cast<int>(parse_u64(v)); });
  set_one(f, "separation", s.task.separation, [](const std::string& v) { return parse_double(v); });
  set_one(f, "data_seed", s.task.seed, [](const std::string& v) { return parse_u64(v); });
  set_one(f, "mnist_images", s.task.images_path, [](const std::string& v) { return v; });
  set_one(f, "mnist_labels", s.task.labels_path, [](const std::string& v) { return v; });
  s.dataset_name = std::string(to_string(s.task.kind));
  set_one(f, "dataset", s.dataset_name, [](const std::string& v) { return v; });
  set_one(f, "epochs", t.epochs, [](const std::string& v) { return static_cast<int>(parse_u64(v)); });
  set_one(f, "batch_size", t.batch_size, [](const std::string& v) {
    const auto b = static_cast<std::size_t>(parse_u64(v));
    if (b == 0) throw std::invalid_argument("batch size must be positive");
    return b;
  });
  set_one(f, "lr", t.adam.lr, [](const std::string& v) { return parse_double(v); });
  set_list(f, "hidden", t.model.hidden, [](const std::string& v) { return static_cast<std::size_t>(parse_u64(v)); });
  set_one(f, "relu", t.model.relu, [](const std::string& v) { return parse_bool(v); });
  set_one(f, "seed", t.seed, [](const std::string& v) { return parse_u64(v); });
  set_one(f, "val_fraction", t.val_fraction, [](const std::string& v) {
    const double x = parse_double(v);
    if (!(x >= 0.0 && x < 1.0)) throw std::invalid_argument("val_fraction must be in [0, 1)");
    return x;
  });
  set_one(f, "threads", t.layer.threads, [](const std::string& v) { return static_cast<unsigned>(parse_u64(v)); });
  double ref = 0.0;
  if (f.find("reference_loss")) {
    set_one(f, "reference_loss", ref, [](const std::string& v) {
      const double x = parse_double(v);
      if (!(x > 0.0)) throw std::invalid_argument("reference loss must be positive");
      return x;
    });
    s.reference_loss = ref;
  }
  if (s.task.kind == TaskKind::MnistIdx && (s.task.images_path.empty() || s.task.labels_path.empty())) {
    const auto* e = f.find("task");
    throw ConfigError(f.source(), e ? e->line : 0, "task", "mnist needs mnist_images and mnist_labels");
  }
  return s;
}

std::vector<RunOutcome> run_sweep(const std::vector<QuantConfig>& configs, const Dataset& data,
                                  const TrainConfig& base, unsigned jobs,
                                  const std::function<void(const RunOutcome&)>& on_done) {
  std::vector<RunOutcome> out(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      RunOutcome& o = out[i];
      o.config = configs[i];
      try {
        o.record = train(data, to_train_config(configs[i], base));
      } catch (const std::invalid_argument& ex) {
        o.error = ex.what();
      }
      if (on_done) {
        std::lock_guard lock(done_mu);
        on_done(o);
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(configs.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

std::vector<double> ReconSpec::default_scales() {
  return {1e-30, 1e-20, 1e-10, 1e-5, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e5, 1e10, 1e20, 1e30};
}

std::vector<double> ReconSpec::default_betas() {
  return {1, 2, 5, 10, 20, 40, 80, 160, std::numeric_limits<double>::infinity()};
}

std::pair<double, double> relative_error_stats(const Matrix& x, const Matrix& fx) {
  std::vector<double> errs;
  errs.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.flat()[i];
    if (v != 0.0) errs.push_back(std::abs(v - fx.flat()[i]) / std::abs(v));
  }
  if (errs.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double e : errs) sum += e;
  const auto mid = errs.begin() + static_cast<std::ptrdiff_t>(errs.size() / 2);
  std::nth_element(errs.begin(), mid, errs.end());
  double median = *mid;
  if (errs.size() % 2 == 0) median = 0.5 * (median + *std::max_element(errs.begin(), mid));
  return {sum / static_cast<double>(errs.size()), median};
}

std::vector<ReconRow> recon_error_experiment(const ReconSpec& spec) {
  const auto scales = spec.scales.empty() ? ReconSpec::default_scales() : spec.scales;
  const auto betas = spec.betas.empty() ? ReconSpec::default_betas() : spec.betas;
  Matrix base(spec.rows, spec.cols);
  RandomStream rng(derive_seed({spec.seed, 0x7265636f}));
  for (auto& v : base.flat()) v = rng.normal();
  std::vector<ReconRow> out;
  for (const auto& name : spec.formats) {
    const FloatFormat& sf = format_by_name(name);
    for (auto l : spec.block_sizes) {
      for (double sc : scales) {
        Matrix x = base;
        for (auto& v : x.flat()) v *= sc;
        for (double beta : betas) {
          BlockSpec bs;
          bs.block_size = l;
          bs.scale_format = &sf;
          bs.z = std::isinf(beta) ? ZFunction{ZKind::Absmax, 40.0} : ZFunction{ZKind::LogSumExp, beta};
          TensorQuantOptions opt;
          opt.tensor_scaling = spec.tensor_scaling;
          opt.seed = spec.seed;
          opt.threads = spec.threads;
          const Matrix fx = dequantize_tensor(quantize_tensor(x, bs, opt));
          const auto [mean, median] = relative_error_stats(x, fx);
          out.push_back({name, l, sc, beta, mean, median});
        }
      }
    }
  }
  return out;
}

void write_recon_csv(std::ostream& os, const std::vector<ReconRow>& rows) {
  os << "format,l,scale,beta,mean_rel_err,median_rel_err\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{},{:g},{},{:.17g},{:.17g}\n", r.format, r.block_size, r.scale,
                      std::isinf(r.beta) ? std::string("inf") : fmt::format("{:g}", r.beta),
                      r.mean_rel_err, r.median_rel_err);
  }
}

Matrix fixed_point_tensor(std::size_t rows, std::size_t cols, std::size_t block, std::uint64_t seed) {
  const auto g = e2m1().grid();
  RandomStream rng(derive_seed({seed, 0x66697864}));
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c0 = 0; c0 < cols; c0 += block) {
      const std::size_t len = std::min(block, cols - c0);
      const double p = std::ldexp(1.0, static_cast<int>(rng.uniform() * 7) - 3);
      for (std::size_t k = 0; k < len; ++k) {
        m(r, c0 + k) = p * g[static_cast<std::size_t>(rng.uniform() * static_cast<double>(g.size()))];
      }
      const auto at = static_cast<std::size_t>(rng.uniform() * static_cast<double>(len));
      m(r, c0 + at) = (rng.uniform() < 0.5 ? -6.0 : 6.0) * p;
    }
  }
  return m;
}

}  // namespace mxsim
