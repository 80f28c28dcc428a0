// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "mxsim/sweep.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace mxsim;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / fs::path("mxsim_cli_" + std::to_string(::getpid()) + "_" +
                                                std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mxsim");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

int lines(const std::string& text) {
  int n = 0;
  for (char ch : text) n += ch == '\n';
  return n;
}

}  // namespace

TEST_CASE("recon writes the error grid") {
  TempDir d;
  const auto r = invoke({"recon", "--format", "E8M0", "--block-size", "32", "--out", d.path.string()});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(d / "recon.csv");
  CHECK(csv.rfind("format,l,scale,beta,mean_rel_err,median_rel_err\n", 0) == 0);
  CHECK(lines(csv) == 1 + 13 * 9);
  CHECK(csv.find("E4M3") == std::string::npos);
}

TEST_CASE("usage and config errors exit with 2") {
  TempDir d;
  auto r = invoke({"recon", "--format", "E9M9", "--out", d.path.string()});
  CHECK(r.code == 2);
  for (const char* name : {"E8M0", "E4M3", "UE5M3", "E8M3", "E5M2"}) CHECK(r.err.find(name) != std::string::npos);
  CHECK(invoke({"recon", "--block-size", "24"}).code == 2);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"plot", "bogus"}).code == 2);
  CHECK(invoke({"--help"}).code == 0);

  write(d / "bad.cfg", "epochs = 2\n\nround_mode = Sideways\n");
  r = invoke({"train", "--config", d / "bad.cfg", "--out", d.path.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find(":3:") != std::string::npos);
  CHECK(r.err.find("round_mode") != std::string::npos);

  write(d / "grid.cfg", "scale_format = E8M0, E4M3\n");
  CHECK(invoke({"train", "--config", d / "grid.cfg"}).code == 2);
  write(d / "spam.cfg", "optimizer = StableSPAM\n");
  CHECK(invoke({"train", "--config", d / "spam.cfg"}).code == 2);
}

TEST_CASE("runtime failures exit with 1") {
  TempDir d;
  CHECK(invoke({"quantize", d / "missing.csv", "--out", d.path.string()}).code == 1);
  write(d / "ragged.csv", "1,2\n3\n");
  CHECK(invoke({"quantize", d / "ragged.csv", "--out", d.path.string()}).code == 1);
  write(d / "empty.csv", "a,b\n");
  CHECK(invoke({"quantize", d / "empty.csv", "--out", d.path.string()}).code == 1);
}

TEST_CASE("quantize reads CSV and binary tensors") {
  TempDir d;
  Matrix m(3, 32);
  for (std::size_t i = 0; i < m.size(); ++i) m.flat()[i] = 0.37 * static_cast<double>(i % 11) - 1.5;
  cli::write_tensor_f32(d / "t.bin", {3, 32}, m);
  const auto tf = cli::read_tensor_file(d / "t.bin");
  CHECK(tf.shape == std::vector<std::size_t>{3, 32});
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(tf.data.flat()[i] == static_cast<float>(m.flat()[i]));

  const auto r = invoke({"quantize", d / "t.bin", "--format", "E4M3", "--out", d.path.string()});
  REQUIRE(r.code == 0);
  const std::string bytes = slurp(d / "t.mxqt");
  const QuantizedTensor qt = deserialize(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
  CHECK(qt.shape == std::vector<std::size_t>{3, 32});
  CHECK(qt.spec.block_size == 16);
  CHECK(lines(slurp(d / "t.dequant.csv")) == 3);
  CHECK(slurp(d / "t.summary.json").find("\"max_abs_err\"") != std::string::npos);

  // A tensor already on the grid comes back unchanged.
  write(d / "grid.csv", "x0,x1,x2,x3\n1,2,3,6\n-0.5,0.25,1.5,3\n");
  REQUIRE(invoke({"quantize", d / "grid.csv", "--format", "E4M3", "--out", d.path.string()}).code == 0);
  CHECK(slurp(d / "grid.dequant.csv") == "1,2,3,6\n-0.5,0.25,1.5,3\n");

  std::string trunc = slurp(d / "t.bin");
  trunc.pop_back();
  write(d / "short.bin", trunc);
  CHECK_THROWS(cli::read_tensor_file(d / "short.bin"));
}

TEST_CASE("MXSIM_SEED overrides --seed") {
  TempDir d;
  Matrix m(4, 32);
  for (std::size_t i = 0; i < m.size(); ++i) m.flat()[i] = std::sin(static_cast<double>(i)) * 3.7;
  cli::write_tensor_f32(d / "x.bin", {4, 32}, m);
  auto run_with = [&](const char* seed, const char* env) {
    if (env)
      ::setenv("MXSIM_SEED", env, 1);
    else
      ::unsetenv("MXSIM_SEED");
    const auto r = invoke({"quantize", d / "x.bin", "--scale-rounding", "Stochastic", "--seed", seed, "--out",
                           d.path.string()});
    ::unsetenv("MXSIM_SEED");
    REQUIRE(r.code == 0);
    return slurp(d / "x.mxqt");
  };
  const auto s1 = run_with("1", nullptr);
  const auto s2 = run_with("2", nullptr);
  CHECK(s1 != s2);
  CHECK(run_with("1", nullptr) == s1);
  CHECK(run_with("1", "2") == s2);
  ::setenv("MXSIM_SEED", "x", 1);
  CHECK(invoke({"recon", "--out", d.path.string()}).code == 2);
  ::unsetenv("MXSIM_SEED");
}

TEST_CASE("train, sweep, pareto and plots are reproducible") {
  TempDir d;
  write(d / "sw.cfg",
        "samples = 400\nhidden = 8\nepochs = 2\nbatch_size = 50\n"
        "scale_format = E8M0, E4M3\nround_mode = TiesToEven, TowardPositive\n");
  auto sweep = [&](const std::string& out, const char* jobs) {
    const auto r = invoke({"sweep", "--config", d / "sw.cfg", "--jobs", jobs, "--out", d / out});
    REQUIRE(r.code == 0);
    return slurp(d / (out + "/results.csv"));
  };
  const std::string a = sweep("a", "1");
  CHECK(sweep("b", "3") == a);
  std::istringstream in(a);
  const auto rows = read_results(in);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.omega == 0.0);

  REQUIRE(invoke({"pareto", d / "a/results.csv", "--out", d / "a"}).code == 0);
  const std::string front = slurp(d / "a/pareto.csv");
  CHECK(lines(front) >= 2);
  CHECK(slurp(d / "a/pareto.svg").find("<svg") == 0);

  write(d / "one.cfg", "samples = 400\nhidden = 8\nepochs = 3\nbatch_size = 50\n");
  REQUIRE(invoke({"train", "--config", d / "one.cfg", "--out", d / "t"}).code == 0);
  CHECK(lines(slurp(d / "t/history.csv")) == 4);

  auto plots = [&](const std::string& out) {
    for (std::vector<std::string> args :
         {std::vector<std::string>{"plot", "loss", d / "t/history.csv"},
          {"plot", "pareto", d / "a/results.csv"},
          {"plot", "quantizer"},
          {"plot", "deviation"}}) {
      args.push_back("--out");
      args.push_back(d / out);
      REQUIRE(invoke(args).code == 0);
    }
    std::string all;
    for (const char* f : {"loss.svg", "pareto.svg", "quantizer.svg", "quantizer_grad.svg", "deviation.svg"})
      all += slurp(d / (out + "/" + f));
    return all;
  };
  CHECK(plots("p1") == plots("p2"));
}

TEST_CASE("svg charts") {
  svg::Chart c("t <&>", "x", "y");
  c.log_y = true;
  svg::Series s("line");
  s.x = {1, 2, 3, 4};
  s.y = {1, -1, 10, std::nan("")};
  c.series = {s};
  const std::string out = svg::render(c);
  CHECK(out.find("t &lt;&amp;&gt;") != std::string::npos);
  CHECK(out.find("nan") == std::string::npos);
  // The non-positive point splits the line; the NaN ends it.
  int polylines = 0;
  for (std::size_t p = out.find("<polyline"); p != std::string::npos; p = out.find("<polyline", p + 1)) ++polylines;
  CHECK(polylines == 2);
  CHECK(svg::render(c) == out);
}
