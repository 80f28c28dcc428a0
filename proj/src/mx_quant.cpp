// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "mxsim/mx_quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace mxsim {

std::string_view to_string(ZeroScaleMode mode) {
  return mode == ZeroScaleMode::ToOne ? "to_one" : "nearest_subnormal";
}

ZeroScaleMode parse_zero_scale_mode(std::string_view name) {
  if (name == "nearest_subnormal" || name == "NearestSubnormal") return ZeroScaleMode::NearestSubnormal;
  if (name == "to_one" || name == "ToOne") return ZeroScaleMode::ToOne;
  throw std::invalid_argument(
      fmt::format("unknown NaN mode '{}' (valid: nearest_subnormal, to_one)", name));
}

double z_value(std::span<const double> block, const ZFunction& z) {
  double m = 0.0;
  for (double v : block) m = std::max(m, std::abs(v));
  if (z.kind == ZKind::Absmax || block.empty()) return m;
  // Shift by the max so exp never overflows.
  double acc = 0.0;
  for (double v : block) acc += std::exp(z.beta * (std::abs(v) - m));
  return m + std::log(acc) / z.beta;
}

double block_scale(std::span<const double> block, const BlockSpec& spec) {
  const double z = z_value(block, spec.z);
  if (z == 0.0) return std::numeric_limits<double>::infinity();
  return kFp4Max / z;
}

double quantize_scale(double s, const BlockSpec& spec, RandomStream* rng) {
  const FloatFormat& f = *spec.scale_format;
  if (!(s < std::numeric_limits<double>::infinity())) return f.max_finite();
  const double r = round_value(s, f, spec.scale_rounding, rng);
  if (r > 0.0) return r;
  return spec.zero_mode == ZeroScaleMode::ToOne ? 1.0 : f.min_positive();
}

double rescale_constant(const FloatFormat& scale_format) {
  return kFp4Max * scale_format.max_finite() * 0.5;
}

double nvfp4_rescale(double s_prime) { return s_prime / rescale_constant(e4m3()); }

namespace {

// Quantizes one block of u = x / g with multiplier C. Writes codes and
// returns the stored scale q(s / C).
double quantize_span(std::span<const double> u, const BlockSpec& spec, double multiplier,
                     RandomStream* rng, std::uint8_t* codes) {
  const double s = block_scale(u, spec);
  const double stored = quantize_scale(s / multiplier, spec, rng);
  const double eff = multiplier * stored;
  const FloatFormat& ef = *spec.elem_format;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double q = round_value(eff * u[i], ef, spec.elem_rounding, rng);
    codes[i] = static_cast<std::uint8_t>(ef.encode(q));
  }
  return stored;
}

void check_spec(const BlockSpec& spec) {
  if (spec.block_size == 0) throw std::invalid_argument("block size must be positive");
  if (spec.elem_format == nullptr || spec.scale_format == nullptr) {
    throw std::invalid_argument("block spec is missing a format");
  }
  if (spec.elem_format->total_bits() > 8) {
    throw std::invalid_argument("element formats wider than 8 bits are not supported");
  }
  if (spec.z.kind == ZKind::LogSumExp && !(spec.z.beta > 0.0)) {
    throw std::invalid_argument("LogSumExp beta must be positive");
  }
}

}  // namespace

BlockQuant quantize_block(std::span<const double> block, const BlockSpec& spec,
                          RandomStream* rng) {
  check_spec(spec);
  BlockQuant out;
  out.codes.resize(block.size());
  out.scale = quantize_span(block, spec, 1.0, rng, out.codes.data());
  return out;
}

std::vector<double> dequantize_block(double scale, std::span<const std::uint8_t> codes,
                                     const BlockSpec& spec) {
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    out[i] = spec.elem_format->decode(codes[i]) / scale;
  }
  return out;
}

std::size_t QuantizedTensor::blocks_per_row() const {
  return (cols + spec.block_size - 1) / spec.block_size;
}

QuantizedTensor quantize_tensor(const Matrix& x, const BlockSpec& spec,
                                const TensorQuantOptions& options) {
  check_spec(spec);
  if (!all_finite(x)) throw std::domain_error("cannot quantize a tensor with NaN or infinity");
  QuantizedTensor qt;
  qt.shape = {x.rows(), x.cols()};
  qt.rows = x.rows();
  qt.cols = x.cols();
  qt.spec = spec;
  qt.tensor_scaling = options.tensor_scaling;
  const std::size_t l = spec.block_size;
  const std::size_t bpr = qt.blocks_per_row();
  const std::size_t nblocks = qt.rows * bpr;
  qt.scales.assign(nblocks, 0.0);
  qt.codes.assign(x.size(), 0);

  auto block_span = [&](const Matrix& m, std::size_t b) {
    const std::size_t r = b / bpr;
    const std::size_t c0 = (b % bpr) * l;
    const std::size_t len = std::min(l, qt.cols - c0);
    return std::span<const double>(m.flat().data() + r * qt.cols + c0, len);
  };

  const Matrix* u = &x;
  Matrix scaled;
  if (options.tensor_scaling) {
    double g = 0.0;
    for (std::size_t b = 0; b < nblocks; ++b) g = std::max(g, z_value(block_span(x, b), spec.z));
    if (g == 0.0) g = 1.0;
    qt.global_scale = g;
    scaled = Matrix(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) scaled.flat()[i] = x.flat()[i] / g;
    u = &scaled;
    if (spec.scale_format == &e4m3() || spec.rescale_any_format) {
      qt.scale_multiplier = rescale_constant(*spec.scale_format);
    }
  }

  const bool stochastic = spec.scale_rounding == RoundingKind::Stochastic ||
                          spec.elem_rounding == RoundingKind::Stochastic;
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const auto span = block_span(*u, b);
      const std::size_t offset = static_cast<std::size_t>(span.data() - u->flat().data());
      std::optional<RandomStream> rng;
      if (stochastic) rng.emplace(derive_seed({options.seed, options.tensor_id, b}));
      qt.scales[b] = quantize_span(span, spec, qt.scale_multiplier, rng ? &*rng : nullptr,
                                   qt.codes.data() + offset);
    }
  };

  // Each block draws from its own stream, so the split does not change results.
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads,
                                                           static_cast<unsigned>(nblocks)));
  if (threads <= 1) {
    work(0, nblocks);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (nblocks + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b0 = t * chunk;
      const std::size_t b1 = std::min(nblocks, b0 + chunk);
      if (b0 >= b1) break;
      pool.emplace_back(work, b0, b1);
    }
    for (auto& th : pool) th.join();
  }
  return qt;
}

Matrix dequantize_tensor(const QuantizedTensor& qt) {
  Matrix out(qt.rows, qt.cols);
  const std::size_t l = qt.spec.block_size;
  const std::size_t bpr = qt.blocks_per_row();
  const FloatFormat& ef = *qt.spec.elem_format;
  for (std::size_t r = 0; r < qt.rows; ++r) {
    for (std::size_t c = 0; c < qt.cols; ++c) {
      const std::size_t b = r * bpr + c / l;
      const std::size_t i = r * qt.cols + c;
      out.flat()[i] = qt.global_scale * (ef.decode(qt.codes[i]) / qt.effective_scale(b));
    }
  }
  return out;
}

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("truncated quantized tensor");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const QuantizedTensor& qt) {
  Writer w;
  for (char c : std::string_view("MXQT")) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(qt.shape.size()));
  for (auto d : qt.shape) w.u64(d);
  w.u64(qt.rows);
  w.u64(qt.cols);
  w.str(qt.spec.elem_format->name());
  w.str(qt.spec.scale_format->name());
  w.u64(qt.spec.block_size);
  w.u8(qt.tensor_scaling ? 1 : 0);
  w.f64(qt.global_scale);
  w.f64(qt.scale_multiplier);
  const FloatFormat& sf = *qt.spec.scale_format;
  const bool wide = sf.total_bits() > 8;
  for (double s : qt.scales) {
    const std::uint32_t code = sf.encode(s);
    w.u8(static_cast<std::uint8_t>(code & 0xff));
    if (wide) w.u8(static_cast<std::uint8_t>(code >> 8));
  }
  const bool nibbles = qt.spec.elem_format->total_bits() <= 4;
  if (nibbles) {
    for (std::size_t i = 0; i < qt.codes.size(); i += 2) {
      std::uint8_t byte = qt.codes[i] & 0x0f;
      if (i + 1 < qt.codes.size()) byte |= static_cast<std::uint8_t>((qt.codes[i + 1] & 0x0f) << 4);
      w.u8(byte);
    }
  } else {
    for (auto c : qt.codes) w.u8(c);
  }
  return w.take();
}

QuantizedTensor deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  std::string magic;
  for (int i = 0; i < 4; ++i) magic.push_back(static_cast<char>(r.u8()));
  if (magic != "MXQT") throw std::runtime_error("not a quantized tensor file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error(fmt::format("unsupported quantized tensor version {}", version));
  }
  QuantizedTensor qt;
  const std::uint32_t ndims = r.u32();
  for (std::uint32_t i = 0; i < ndims; ++i) qt.shape.push_back(r.u64());
  qt.rows = r.u64();
  qt.cols = r.u64();
  qt.spec.elem_format = &format_by_name(r.str());
  qt.spec.scale_format = &format_by_name(r.str());
  qt.spec.block_size = r.u64();
  if (qt.spec.block_size == 0) throw std::runtime_error("quantized tensor has block size 0");
  qt.tensor_scaling = r.u8() != 0;
  qt.global_scale = r.f64();
  qt.scale_multiplier = r.f64();
  const FloatFormat& sf = *qt.spec.scale_format;
  const bool wide = sf.total_bits() > 8;
  qt.scales.resize(qt.rows * qt.blocks_per_row());
  for (auto& s : qt.scales) {
    std::uint32_t code = r.u8();
    if (wide) code |= std::uint32_t{r.u8()} << 8;
    s = sf.decode(code);
  }
  qt.codes.resize(qt.rows * qt.cols);
  if (qt.spec.elem_format->total_bits() <= 4) {
    for (std::size_t i = 0; i < qt.codes.size(); i += 2) {
      const std::uint8_t byte = r.u8();
      qt.codes[i] = byte & 0x0f;
      if (i + 1 < qt.codes.size()) qt.codes[i + 1] = byte >> 4;
    }
  } else {
    for (auto& c : qt.codes) c = r.u8();
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after quantized tensor");
  return qt;
}

void write_csv_dump(std::ostream& os, const QuantizedTensor& qt) {
  const Matrix deq = dequantize_tensor(qt);
  const std::size_t bpr = qt.blocks_per_row();
  fmt::print(os, "row,col,value,code,block,scale\n");
  for (std::size_t r = 0; r < qt.rows; ++r) {
    for (std::size_t c = 0; c < qt.cols; ++c) {
      const std::size_t b = r * bpr + c / qt.spec.block_size;
      fmt::print(os, "{},{},{:.17g},{},{},{:.17g}\n", r, c, deq(r, c), qt.codes[r * qt.cols + c],
                 b, qt.effective_scale(b));
    }
  }
}

}  // namespace mxsim
