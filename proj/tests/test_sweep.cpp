// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mxsim/random.hpp"
#include "mxsim/sweep.hpp"
#include "reference_tables.hpp"

using namespace mxsim;

TEST_CASE("complexity points of single techniques") {
  QuantConfig c;
  CHECK(complexity_points(c) == 0.0);
  c.optimizer = "StableSPAM";
  c.hadamard = HadamardMode::All;
  CHECK(complexity_points(c) == 1.5);
  QuantConfig d;
  d.sr = SrPolicy::BackwardActivations;
  d.loss_scaling = true;
  d.tensor_scaling = true;
  d.tensor_grad = TensorScaleGradMode::Ignore;
  d.optimizer = "StableSPAM";
  CHECK(complexity_points(d) == 2.0);
  QuantConfig e;
  e.max_approx = DzKind::Softmax;
  e.step_grad = QGradKind::Spline;
  e.scale_grad = QGradKind::BaselinePower;
  e.tensor_scaling = true;
  e.tensor_grad = TensorScaleGradMode::Absmax;
  e.scale_rounding = RoundingKind::Stochastic;
  CHECK(complexity_points(e) == 3.0 + 2.0 + 1.5 + 0.5 + 3.0 + 0.25);
  const ComplexityWeights w;
  for (double v : {w.smoothing, w.tensor_scale_grad, w.step_gradient, w.hadamard, w.quantized_gradient,
                   w.sr, w.tensor_scaling, w.loss_scaling, w.spam_optimizer, w.scale_sr})
    CHECK(v >= 0.0);
}

TEST_CASE("score") {
  CHECK(score(2.665, 3.099, 0.0) == doctest::Approx(-0.16285).epsilon(1e-4));
  CHECK(std::round(score(2.665, 3.099, 0.0) * 1000) / 1000 == -0.163);
  CHECK(std::round(score(2.258, 2.603, 0.0) * 1000) / 1000 == -0.153);
  for (double om : {0.0, 0.5, 4.0}) CHECK(score(1.7, 1.7, om) == 0.0);
  CHECK(score(1.0, 0.5, 4.0) == doctest::Approx(0.125));
  CHECK(score(1.0, 1.5, 4.0) == doctest::Approx(-2.0));
  CHECK(score(1.0, 0.5, 0.5) == doctest::Approx(0.5));
  CHECK(score(1.0, 0.5, 4.0, ScoreRule::OnePlusOmega) == doctest::Approx(0.1));
  CHECK_THROWS_AS(score(0.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(score(-1.0, 1.0, 0.0), std::invalid_argument);
  CHECK(reference_loss({2.665, 2.983}) == 2.665);
  const auto r = make_report(QuantConfig{}, 2.0, 1.0);
  CHECK(r.gain == 0.5);
  CHECK(r.score == 0.5);
}

TEST_CASE("grid enumeration") {
  SweepGrid g;
  g.max_approx = {DzKind::STE};
  g.step_grad = {QGradKind::STE};
  g.scale_grad = {QGradKind::STE};
  g.tensor_grad = {TensorScaleGradMode::Ignore};
  g.optimizers = {"Adam"};
  g.loss_scaling = {false};
  g.tensor_scaling = {false};
  g.sr = {SrPolicy::None};
  g.hadamard = {HadamardMode::None};
  const auto e = enumerate_configs(g);
  CHECK(e.configs.size() == 6);
  CHECK(e.dropped == 0);
  for (const auto& c : e.configs) CHECK_FALSE(c.tensor_grad.has_value());

  const auto full = enumerate_configs(SweepGrid{});
  CHECK(full.raw == 46656);
  CHECK(full.raw > 20000);
  CHECK(full.configs.size() + full.dropped == full.raw);
  std::set<std::string> ids;
  for (const auto& c : full.configs) {
    if (!c.tensor_scaling) CHECK_FALSE(c.tensor_grad.has_value());
    if (c.tensor_scaling) CHECK(c.tensor_grad.has_value());
    ids.insert(c.id());
  }
  CHECK(ids.size() == full.configs.size());
  CHECK(full.configs.size() == 31104);
}

TEST_CASE("pareto front examples") {
  CHECK(pareto_front({{0.0, 0.1, 0}}).size() == 1);
  const auto a = pareto_front({{0.0, 0.1, 0}, {1.0, 0.05, 1}});
  REQUIRE(a.size() == 1);
  CHECK(a[0].index == 0);
  CHECK(pareto_front({{0.0, 0.1, 0}, {1.0, 0.2, 1}}).size() == 2);
  CHECK(pareto_front({{1.0, 0.2, 0}, {1.0, 0.2, 1}}).size() == 2);
  CHECK_THROWS(pareto_front({}));
}

TEST_CASE("pareto front is domination-free and maximal") {
  RandomStream rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ParetoPoint> pts;
    for (std::size_t i = 0; i < 40; ++i)
      pts.push_back({std::floor(rng.uniform() * 8) * 0.5, std::round(rng.uniform() * 20) / 20, i});
    const auto front = pareto_front(pts);
    auto dominates = [](const ParetoPoint& a, const ParetoPoint& b) {
      return a.omega <= b.omega && a.score >= b.score && (a.omega < b.omega || a.score > b.score);
    };
    std::set<std::size_t> on;
    for (const auto& f : front) {
      on.insert(f.index);
      for (const auto& p : pts) CHECK_FALSE(dominates(p, f));
    }
    for (const auto& p : pts) {
      if (on.count(p.index)) continue;
      bool covered = false;
      for (const auto& f : front) covered |= dominates(f, p);
      CHECK(covered);
    }
  }
}

TEST_CASE("published complexity cells") {
  const auto rows = reference::load();
  int checked = 0;
  std::vector<std::string> mismatches;
  for (const auto& r : rows) {
    if (r.baseline) continue;
    const QuantConfig c = config_from_table(r.cells);
    const double want = std::stod(r.cells.at("Complexity points"));
    if (std::abs(complexity_points(c) - want) > 5e-4) mismatches.push_back(r.label());
    ++checked;
  }
  CHECK(checked == 122);
  // One published cell is 1.5 above the sum of its own columns (see README).
  REQUIRE(mismatches.size() == 1);
  CHECK(mismatches[0] == "additional/CIFAR10/Best loss NVFP4/E4M3");
}

TEST_CASE("published score cells") {
  const auto rows = reference::load();
  const auto mins = reference::baseline_minima(rows);
  int checked = 0, ok = 0;
  for (const auto& r : rows) {
    if (r.baseline || !reference::scored_table(r.table)) continue;
    const double omega = std::stod(r.cells.at("Complexity points"));
    const double want = std::stod(r.cells.at("Score"));
    const double m_ref = mins.at(r.table + "/" + r.dataset);
    double point = 0.0;
    const bool within = reference::score_within(want, r.val, m_ref, omega, 0.002, &point);
    INFO(r.label(), " published=", want, " computed=", point);
    CHECK(within);
    ++checked;
    ok += within;
  }
  CHECK(checked == 108);
}

TEST_CASE("table spellings") {
  std::map<std::string, std::string> row = {
      {"Scale", "E5M3"}, {"Block size", "16.000"}, {"Max grad.", "hardsoftmax"},
      {"Quant. grad", "spline"}, {"Hadamard", "backward_exact"}, {"Scale grad", "baseline"},
      {"SR", "IntelFP4_exact"}, {"Optimiser", "StableSPAM"}, {"Loss scaling", "True"},
      {"Round mode", "Stochastic"}, {"Tensor scaling", "True"}, {"Tensor grad", "absmax"},
      {"NaN mode", "to_one"}};
  const auto c = config_from_table(row);
  CHECK(c.scale_format == "UE5M3");
  CHECK(c.block_size == 16);
  CHECK(c.max_approx == DzKind::Hybrid);
  CHECK(c.hadamard == HadamardMode::BackwardOnly);
  CHECK(c.sr == SrPolicy::BackwardActivations);
  CHECK(c.nan_mode == ZeroScaleMode::ToOne);
  row["SR"] = "all_activation_exact";
  row["Hadamard"] = "N/A";
  row["Tensor grad"] = "N/A";
  const auto d = config_from_table(row);
  CHECK(d.sr == SrPolicy::AllActivations);
  CHECK(d.hadamard == HadamardMode::None);
  CHECK_FALSE(d.tensor_grad.has_value());
  row["Scale"] = "E9M9";
  CHECK_THROWS(config_from_table(row));
}

TEST_CASE("results CSV round trip") {
  ResultRow r;
  r.dataset = "gaussian_regression";
  r.config.scale_format = "E4M3";
  r.config.block_size = 16;
  r.config.tensor_scaling = true;
  r.config.tensor_grad = TensorScaleGradMode::Absmax;
  r.config.sr = SrPolicy::AllActivations;
  r.val_loss = 1.0 / 3.0;
  r.train_loss = 0.25;
  r.omega = complexity_points(r.config);
  r.score = -0.125;
  std::stringstream ss;
  write_result_header(ss);
  write_result_row(ss, r);
  const std::string text = ss.str();
  CHECK(text.rfind("Dataset,Val loss,Train loss,Scale,Block size,Max grad.,Quant. grad,Hadamard,Scale grad,"
                   "SR,Optimiser,Loss scaling,Round mode,Tensor scaling,Tensor grad,Complexity points,"
                   "Score,NaN mode,",
                   0) == 0);
  const auto back = read_results(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].config == r.config);
  CHECK(back[0].val_loss == r.val_loss);
  CHECK(back[0].score == r.score);
  CHECK(split_csv_line("a,\"b,c\",\"d\"\"e\"") == std::vector<std::string>{"a", "b,c", "d\"e"});
  CHECK(csv_field("x,y") == "\"x,y\"");
}

TEST_CASE("config files") {
  std::istringstream in(
      "# comment\n"
      "scale_format = E8M0, \"E4M3\"\n"
      "round_mode = TiesToEven   # trailing\n"
      "sr = [None, backward]\n"
      "hadamard = all\n"
      "nan_mode = to_one\n"
      "epochs = 3\n"
      "hidden = 16, 8\n");
  const auto f = parse_sweep_file(KeyValueFile::parse(in, "test.cfg"));
  CHECK(f.grid.scale_formats == std::vector<std::string>{"E8M0", "E4M3"});
  CHECK(f.grid.sr.size() == 2);
  CHECK(f.train.epochs == 3);
  CHECK(f.train.model.hidden == std::vector<std::size_t>{16, 8});
  CHECK(enumerate_configs(f.grid).configs.size() == 4);

  auto fails = [](const std::string& text, int line, const std::string& key) {
    std::istringstream s(text);
    try {
      parse_sweep_file(KeyValueFile::parse(s, "bad.cfg"));
    } catch (const ConfigError& e) {
      CHECK(e.line() == line);
      CHECK(e.key() == key);
      return;
    }
    FAIL("no ConfigError for: " << text);
  };
  fails("epochs = 2\nscale_format = E9M9\n", 2, "scale_format");
  fails("\n\nbogus = 1\n", 3, "bogus");
  fails("epochs = many\n", 1, "epochs");
  fails("epochs = 1\nepochs = 2\n", 2, "epochs");
  fails("just text\n", 1, "");
  fails("sr = sometimes\n", 1, "sr");
  fails("task = mnist\n", 1, "task");
  fails("epochs = 1, 2\n", 1, "epochs");
}

TEST_CASE("training config follows the technique columns") {
  QuantConfig c;
  c.scale_format = "E4M3";
  c.block_size = 16;
  c.max_approx = DzKind::Softmax;
  c.hadamard = HadamardMode::BackwardOnly;
  c.tensor_scaling = true;
  c.tensor_grad = TensorScaleGradMode::Absmax;
  const auto t = to_train_config(c, TrainConfig{});
  CHECK(t.layer.quant.spec.scale_format == &e4m3());
  CHECK(t.layer.quant.spec.z.kind == ZKind::LogSumExp);
  CHECK(t.layer.hadamard.block_size == 16);
  CHECK(t.layer.quant.tensor_grad == TensorScaleGradMode::Absmax);
  c.block_size = 24;
  CHECK_THROWS_AS(to_train_config(c, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("sweep runner is deterministic and isolates failures") {
  const auto data = gen_gaussian_regression({300, 32, 2});
  TrainConfig base;
  base.model.hidden = {16};
  base.epochs = 2;
  base.batch_size = 64;
  std::vector<QuantConfig> cfgs(3);
  cfgs[1].scale_format = "E4M3";
  cfgs[1].block_size = 16;
  cfgs[1].sr = SrPolicy::BackwardActivations;
  cfgs[2].optimizer = "StableSPAM";
  std::stringstream csv;
  CsvAppender app(csv);
  int done = 0;
  const auto a = run_sweep(cfgs, data, base, 3, [&](const RunOutcome& o) {
    ++done;
    if (o.record) app.append({"g", o.config, o.record->final_val(), o.record->final_train(), 0, 0, false});
  });
  const auto b = run_sweep(cfgs, data, base, 1);
  CHECK(done == 3);
  REQUIRE(a[0].record);
  REQUIRE(a[1].record);
  CHECK_FALSE(a[2].record);
  CHECK(a[2].error.find("Adam only") != std::string::npos);
  CHECK(a[0].record->val_loss == b[0].record->val_loss);
  CHECK(a[1].record->val_loss == b[1].record->val_loss);
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 2);
}

TEST_CASE("relative error statistics") {
  const Matrix x(1, 4, std::vector<double>{1, 2, -4, 0});
  const Matrix f(1, 4, std::vector<double>{1, 1, -3, 5});
  const auto [mean, median] = relative_error_stats(x, f);
  CHECK(mean == doctest::Approx((0 + 0.5 + 0.25) / 3));
  CHECK(median == 0.25);
  const Matrix y(1, 4, std::vector<double>{1, 2, 3, 4});
  CHECK(relative_error_stats(y, Matrix(1, 4, std::vector<double>{1, 1, 3, 2})).second == doctest::Approx(0.25));
}

TEST_CASE("reconstruction error grid") {
  ReconSpec spec;
  spec.block_sizes = {16, 32};
  spec.scales = {1.0, 1e30};
  spec.betas = {40.0, INFINITY};
  spec.rows = 16;
  spec.cols = 64;
  const auto rows = recon_error_experiment(spec);
  CHECK(rows.size() == 3 * 2 * 2 * 2);
  auto find = [&](const std::string& f, double s) {
    for (const auto& r : rows)
      if (r.format == f && r.scale == s && r.block_size == 16 && std::isinf(r.beta)) return r;
    FAIL("missing cell");
    return ReconRow{};
  };
  // An E4M3 scale cannot reach 6/1e30, so every element flushes to zero.
  CHECK(find("E4M3", 1e30).mean_rel_err == doctest::Approx(1.0));
  CHECK(find("E8M0", 1e30).mean_rel_err < 0.3);
  CHECK(find("E8M0", 1e30).mean_rel_err == doctest::Approx(find("E8M0", 1.0).mean_rel_err).epsilon(0.05));
  std::ostringstream os;
  write_recon_csv(os, rows);
  const std::string text = os.str();
  CHECK(text.rfind("format,l,scale,beta,mean_rel_err,median_rel_err\n", 0) == 0);
  CHECK(text.find(",inf,") != std::string::npos);
}

TEST_CASE("fixed-point tensors reconstruct exactly") {
  for (const char* name : {"E8M0", "E4M3", "UE5M3"}) {
    for (std::size_t l : {16u, 32u, 24u}) {
      const Matrix x = fixed_point_tensor(8, 96, l, 3);
      BlockSpec spec;
      spec.block_size = l;
      spec.scale_format = &format_by_name(name);
      const Matrix f = dequantize_tensor(quantize_tensor(x, spec));
      CHECK(f == x);
      CHECK(relative_error_stats(x, f).first == 0.0);
    }
  }
}
