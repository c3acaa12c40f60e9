#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "optinc/codec.hpp"
#include "optinc/config.hpp"
#include "optinc/io_util.hpp"
#include "optinc/oracle.hpp"
#include "optinc/photonic.hpp"
#include "optinc/rng.hpp"

namespace optinc {

enum class Activation : std::uint8_t { relu = 0, gelu = 1, tanh = 2 };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    default: return "tanh";
  }
}

struct OnnSpec {
  std::vector<unsigned> layer_dims;  // first == K, last == M
  Activation activation = Activation::relu;
  std::set<unsigned> approx_layers;  // 1-based weight-layer indices
  bool use_bias = true;
  double input_scale = 1.0;   // 1 / (4^g - 1)
  double output_scale = 3.0;  // PAM4 level span

  unsigned num_weight_layers() const {
    return static_cast<unsigned>(layer_dims.size()) - 1;
  }

  void validate() const {
    if (layer_dims.size() < 2) throw DomainError("ONN spec needs >= 2 dims");
    for (unsigned d : layer_dims)
      if (d == 0) throw DomainError("zero layer dimension");
    for (unsigned l : approx_layers)
      if (l < 1 || l > num_weight_layers())
        throw DomainError("approx layer index " + std::to_string(l) +
                          " outside 1.." + std::to_string(num_weight_layers()));
  }
};

inline OnnSpec make_onn_spec(const SystemConfig& cfg,
                             std::vector<unsigned> layer_dims,
                             Activation act = Activation::relu,
                             std::set<unsigned> approx_layers = {},
                             bool use_bias = true) {
  OnnSpec spec;
  spec.layer_dims = std::move(layer_dims);
  spec.activation = act;
  spec.approx_layers = std::move(approx_layers);
  spec.use_bias = use_bias;
  spec.validate();
  if (spec.layer_dims.front() != cfg.onn_inputs)
    throw DomainError("ONN input width != K");
  if (spec.layer_dims.back() != cfg.segments)
    throw DomainError("ONN output width != M");
  spec.input_scale =
      1.0 / static_cast<double>((std::int64_t{1} << (2 * cfg.group)) - 1);
  spec.output_scale = 3.0;
  return spec;
}

struct OnnModel {
  OnnSpec spec;
  std::vector<Matrix> weights;  // out x in per layer
  std::vector<Vector> biases;
  // present (non-empty per layer) only after projection
  std::vector<std::vector<ApproxFactor>> approx_factors;

  bool layer_projected(unsigned l) const {  // 1-based
    return l <= approx_factors.size() && !approx_factors[l - 1].empty();
  }
};

namespace detail {

inline void apply_activation(Eigen::ArrayXXd& z, Activation a) {
  switch (a) {
    case Activation::relu:
      z = z.max(0.0);
      break;
    case Activation::gelu:
      z = z.unaryExpr([](double x) {
        return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
      });
      break;
    case Activation::tanh:
      z = z.tanh();
      break;
  }
}

// derivative as a function of the pre-activation
inline Eigen::ArrayXXd activation_grad(const Eigen::ArrayXXd& z, Activation a) {
  switch (a) {
    case Activation::relu:
      return (z > 0.0).cast<double>();
    case Activation::gelu:
      return z.unaryExpr([](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return cdf + x * pdf;
      });
    default: {
      Eigen::ArrayXXd t = z.tanh();
      return 1.0 - t.square();
    }
  }
}

}  // namespace detail

// Xavier-uniform init, drawn in a fixed order so a seed pins the model.
inline OnnModel init_model(const OnnSpec& spec, std::uint64_t seed) {
  spec.validate();
  OnnModel m;
  m.spec = spec;
  Rng rng(seed);
  const unsigned L = spec.num_weight_layers();
  m.weights.reserve(L);
  m.biases.reserve(L);
  m.approx_factors.assign(L, {});
  for (unsigned l = 0; l < L; ++l) {
    const unsigned in = spec.layer_dims[l], out = spec.layer_dims[l + 1];
    const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
    Matrix w(out, in);
    for (unsigned r = 0; r < out; ++r)
      for (unsigned c = 0; c < in; ++c) w(r, c) = rng.uniform(-lim, lim);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Vector::Zero(out));
  }
  return m;
}

// Batched forward pass: columns are samples, input in grid units
// (pre-scaling applied here), output in PAM4 level units.
inline Matrix forward_batch(const OnnModel& m, const Matrix& x_grid) {
  if (x_grid.rows() != static_cast<Eigen::Index>(m.spec.layer_dims.front()))
    throw DomainError("forward input dimension mismatch");
  Matrix h = x_grid * m.spec.input_scale;
  const unsigned L = m.spec.num_weight_layers();
  for (unsigned l = 0; l < L; ++l) {
    Matrix z = m.weights[l] * h;
    if (m.spec.use_bias) z.colwise() += m.biases[l];
    if (l + 1 < L) {
      Eigen::ArrayXXd a = z.array();
      detail::apply_activation(a, m.spec.activation);
      h = a.matrix();
    } else {
      h = std::move(z);
    }
  }
  return h * m.spec.output_scale;
}

inline AnalogFrame forward(const OnnModel& m, const PreprocessedVector& x) {
  Matrix col(x.a.size(), 1);
  for (std::size_t i = 0; i < x.a.size(); ++i) col(i, 0) = x.a[i].value();
  const Matrix y = forward_batch(m, col);
  AnalogFrame f;
  f.levels.assign(y.data(), y.data() + y.rows());
  return f;
}

// Rebuild an out x in weight matrix from its per-block factors (vertical
// stacking when out > in, horizontal when in > out). Padded rows/columns
// beyond the true shape are cropped.
inline Matrix assemble_effective_weight(unsigned out_dim, unsigned in_dim,
                                        const std::vector<ApproxFactor>& factors) {
  if (factors.empty()) throw DomainError("no approximation factors to assemble");
  const unsigned s = std::min(out_dim, in_dim);
  const unsigned long_dim = std::max(out_dim, in_dim);
  const unsigned blocks = (long_dim + s - 1) / s;
  std::vector<bool> seen(blocks, false);
  Matrix w = Matrix::Zero(out_dim, in_dim);
  for (const ApproxFactor& f : factors) {
    const unsigned b = out_dim >= in_dim ? f.row_block : f.col_block;
    if (b >= blocks) throw DomainError("approximation block out of range");
    seen[b] = true;
    const Matrix block = f.d.asDiagonal() * f.u;
    if (out_dim >= in_dim) {
      const unsigned r0 = b * s;
      const unsigned rows = std::min(s, out_dim - r0);
      w.block(r0, 0, rows, s) = block.topRows(rows);
    } else {
      const unsigned c0 = b * s;
      const unsigned cols = std::min(s, in_dim - c0);
      w.block(0, c0, s, cols) = block.leftCols(cols);
    }
  }
  for (bool b : seen)
    if (!b) throw DomainError("missing approximation block");
  return w;
}

// Hard-project one weight matrix onto the Sigma_a U_a structure; the stored
// matrix becomes exactly the assembly of the returned factors.
inline std::vector<ApproxFactor> project_layer(Matrix& w) {
  std::vector<ApproxFactor> factors = approximate_layer(w);
  w = assemble_effective_weight(static_cast<unsigned>(w.rows()),
                                static_cast<unsigned>(w.cols()), factors);
  return factors;
}

struct EvalReport {
  std::uint64_t count = 0;
  std::uint64_t exact_matches = 0;
  double exact_match = 0.0;  // fraction
  std::vector<double> symbol_error_rate;
  // per channel, [expected][got] over integer symbol levels
  std::vector<std::array<std::array<std::uint64_t, 4>, 4>> confusion;
};

// Forward -> transceiver snap -> decode -> compare with the oracle target.
// Level-1 cascade datasets are judged on the carry-extended grid.
inline EvalReport evaluate(const OnnModel& model, const AggregationDataset& ds,
                           const SystemConfig& cfg) {
  if (model.spec.layer_dims.front() != cfg.onn_inputs ||
      model.spec.layer_dims.back() != cfg.segments)
    throw DomainError("model dimensions do not match the system config");
  if (ds.cfg.segments != cfg.segments || ds.cfg.onn_inputs != cfg.onn_inputs)
    throw DomainError("dataset does not match the system config");
  const unsigned M = cfg.segments;
  const bool extended = ds.cascade_level == 1;
  const std::int64_t n = cfg.servers;

  EvalReport rep;
  rep.count = ds.samples.size();
  rep.symbol_error_rate.assign(M, 0.0);
  rep.confusion.assign(M, {});
  std::vector<std::uint64_t> symbol_errors(M, 0);

  const std::size_t chunk = 4096;
  Matrix x(cfg.onn_inputs, std::min(chunk, ds.samples.size()));
  for (std::size_t base = 0; base < ds.samples.size(); base += chunk) {
    const std::size_t cnt = std::min(chunk, ds.samples.size() - base);
    x.resize(cfg.onn_inputs, cnt);
    for (std::size_t i = 0; i < cnt; ++i)
      for (unsigned k = 0; k < cfg.onn_inputs; ++k)
        x(k, i) = ds.samples[base + i].inputs.a[k].value();
    const Matrix y = forward_batch(model, x);
    for (std::size_t i = 0; i < cnt; ++i) {
      const AggregationSample& s = ds.samples[base + i];
      bool all_ok = true;
      for (unsigned ch = 0; ch < M; ++ch) {
        const bool ext_ch = extended && ch + 1 == M;
        // integer grid index of the snapped level
        long long got_idx, want_idx;
        if (!ext_ch) {
          double v = std::floor(y(ch, i) + 0.5);
          v = std::min(3.0, std::max(0.0, v));
          got_idx = static_cast<long long>(v);
          want_idx = s.target_symbols[ch].num / s.target_symbols[ch].den;
        } else {
          long long idx = static_cast<long long>(
              std::floor(y(ch, i) * static_cast<double>(n) + 0.5));
          idx = std::min(3 * n + n - 1, std::max<std::int64_t>(0, idx));
          got_idx = idx;
          const Rat& t = s.target_symbols[ch];
          want_idx = t.num * (n / t.den);
        }
        const long long got_int = ext_ch ? got_idx / n : got_idx;
        const long long want_int = ext_ch ? want_idx / n : want_idx;
        rep.confusion[ch][static_cast<std::size_t>(std::min(3LL, want_int))]
                     [static_cast<std::size_t>(std::min(3LL, got_int))]++;
        if (got_idx != want_idx) {
          symbol_errors[ch]++;
          all_ok = false;
        }
      }
      if (all_ok) rep.exact_matches++;
    }
  }
  rep.exact_match = rep.count == 0
                        ? 0.0
                        : static_cast<double>(rep.exact_matches) /
                              static_cast<double>(rep.count);
  for (unsigned ch = 0; ch < M; ++ch)
    rep.symbol_error_rate[ch] =
        rep.count == 0 ? 0.0
                       : static_cast<double>(symbol_errors[ch]) /
                             static_cast<double>(rep.count);
  return rep;
}

// --- checkpoint io ----------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "OPTINNM1";

inline void save_checkpoint(const std::filesystem::path& path, const OnnModel& m) {
  atomic_write(path, [&](std::ostream& os) {
    BinWriter w(os);
    w.magic(kCheckpointMagic, 8);
    w.u32(static_cast<std::uint32_t>(m.spec.layer_dims.size()));
    for (unsigned d : m.spec.layer_dims) w.u32(d);
    w.u8(static_cast<std::uint8_t>(m.spec.activation));
    w.u8(m.spec.use_bias ? 1 : 0);
    w.f64(m.spec.input_scale);
    w.f64(m.spec.output_scale);
    w.u32(static_cast<std::uint32_t>(m.spec.approx_layers.size()));
    for (unsigned l : m.spec.approx_layers) w.u32(l);
    for (unsigned l = 0; l < m.spec.num_weight_layers(); ++l) {
      const Matrix& mat = m.weights[l];
      w.u32(static_cast<std::uint32_t>(mat.rows()));
      w.u32(static_cast<std::uint32_t>(mat.cols()));
      for (Eigen::Index r = 0; r < mat.rows(); ++r)
        for (Eigen::Index c = 0; c < mat.cols(); ++c) w.f64(mat(r, c));
      for (Eigen::Index r = 0; r < m.biases[l].size(); ++r) w.f64(m.biases[l](r));
      const bool projected = m.layer_projected(l + 1);
      w.u8(projected ? 1 : 0);
      if (projected) {
        const auto& factors = m.approx_factors[l];
        w.u32(static_cast<std::uint32_t>(factors.size()));
        for (const ApproxFactor& f : factors) {
          w.u32(f.row_block);
          w.u32(f.col_block);
          w.u32(static_cast<std::uint32_t>(f.d.size()));
          for (Eigen::Index i = 0; i < f.d.size(); ++i) w.f64(f.d(i));
          for (Eigen::Index r = 0; r < f.u.rows(); ++r)
            for (Eigen::Index c = 0; c < f.u.cols(); ++c) w.f64(f.u(r, c));
        }
      }
    }
  });
}

inline OnnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  BinReader r(is);
  r.expect_magic(kCheckpointMagic, 8, "checkpoint");
  OnnModel m;
  const std::uint32_t ndims = r.u32();
  m.spec.layer_dims.resize(ndims);
  for (auto& d : m.spec.layer_dims) d = r.u32();
  m.spec.activation = static_cast<Activation>(r.u8());
  m.spec.use_bias = r.u8() != 0;
  m.spec.input_scale = r.f64();
  m.spec.output_scale = r.f64();
  const std::uint32_t napprox = r.u32();
  for (std::uint32_t i = 0; i < napprox; ++i) m.spec.approx_layers.insert(r.u32());
  m.spec.validate();
  const unsigned L = m.spec.num_weight_layers();
  m.weights.resize(L);
  m.biases.resize(L);
  m.approx_factors.assign(L, {});
  for (unsigned l = 0; l < L; ++l) {
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows != m.spec.layer_dims[l + 1] || cols != m.spec.layer_dims[l])
      throw IoError("checkpoint layer shape mismatch");
    Matrix mat(rows, cols);
    for (std::uint32_t rr = 0; rr < rows; ++rr)
      for (std::uint32_t cc = 0; cc < cols; ++cc) mat(rr, cc) = r.f64();
    m.weights[l] = std::move(mat);
    Vector b(rows);
    for (std::uint32_t rr = 0; rr < rows; ++rr) b(rr) = r.f64();
    m.biases[l] = std::move(b);
    if (r.u8() != 0) {
      const std::uint32_t nblocks = r.u32();
      auto& factors = m.approx_factors[l];
      factors.resize(nblocks);
      for (auto& f : factors) {
        f.row_block = r.u32();
        f.col_block = r.u32();
        const std::uint32_t s = r.u32();
        f.d.resize(s);
        for (std::uint32_t i = 0; i < s; ++i) f.d(i) = r.f64();
        f.u.resize(s, s);
        for (std::uint32_t rr = 0; rr < s; ++rr)
          for (std::uint32_t cc = 0; cc < s; ++cc) f.u(rr, cc) = r.f64();
      }
    }
  }
  return m;
}

}  // namespace optinc
