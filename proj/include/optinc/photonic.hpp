#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "optinc/config.hpp"
#include "optinc/io_util.hpp"

namespace optinc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

// One square block of an approximated layer: W_s ~ diag(d) * u with u
// orthogonal. block_pos locates the block in the layer's partition grid.
struct ApproxFactor {
  Vector d;
  Matrix u;
  unsigned row_block = 0;
  unsigned col_block = 0;
};

struct MeshMzi {
  unsigned layer = 0;     // column in the interleaved rectangle
  unsigned top_port = 0;  // acts on ports (top_port, top_port + 1)
  double theta = 0.0;
  double phi = 0.0;
};

// A programmed interleaved mesh: m(m-1)/2 MZIs plus m output phase shifters.
// Applied to an input vector MZI by MZI in ascending layer order, then the
// output phases.
struct MeshProgram {
  unsigned size = 0;
  std::vector<MeshMzi> mzis;
  std::vector<double> output_phases;
};

struct CostReport {
  struct Layer {
    unsigned out_dim = 0;
    unsigned in_dim = 0;
    bool approximated = false;
    std::uint64_t full_mzis = 0;
    std::uint64_t approx_mzis = 0;  // cost when approximated (0 if not)
  };
  std::vector<Layer> per_layer;
  std::uint64_t total_full = 0;
  std::uint64_t total_effective = 0;
  double area_ratio = 1.0;
};

// --- matrix approximation (square blocks -> Sigma_a * U_a) -----------------

// Orthogonal Procrustes solution U_s V_s^T from the SVD of w_s. Degenerate
// (rank-deficient) inputs still succeed; *degenerate is set so callers can
// warn about the sign-convention freedom.
inline Matrix closest_orthogonal(const Matrix& w_s, bool* degenerate = nullptr) {
  if (w_s.rows() != w_s.cols())
    throw DomainError("closest_orthogonal needs a square matrix");
  Eigen::JacobiSVD<Matrix> svd(w_s, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (degenerate) {
    const auto& sv = svd.singularValues();
    *degenerate = sv(sv.size() - 1) <= 1e-12 * std::max(1.0, sv(0));
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

// Row-wise least squares d_i = argmin || W_s^i - d_i U_a^i ||^2. With unit
// rows of an orthogonal U_a this is the plain inner product.
inline Vector fit_diagonal(const Matrix& w_s, const Matrix& u_a) {
  if (w_s.rows() != u_a.rows() || w_s.cols() != u_a.cols())
    throw DomainError("fit_diagonal shape mismatch");
  Vector d(w_s.rows());
  for (Eigen::Index i = 0; i < w_s.rows(); ++i) {
    const double nn = u_a.row(i).squaredNorm();
    d(i) = w_s.row(i).dot(u_a.row(i)) / nn;
  }
  return d;
}

// Partition an out x in layer into s x s blocks with s = min(out, in)
// (stacked vertically when out > in, horizontally when in > out; shapes
// that do not divide evenly are zero-padded up to the next multiple) and
// approximate each block by (fit_diagonal, closest_orthogonal).
inline std::vector<ApproxFactor> approximate_layer(const Matrix& w) {
  const Eigen::Index out = w.rows(), in = w.cols();
  if (out == 0 || in == 0) throw DomainError("approximate_layer on empty matrix");
  const Eigen::Index s = std::min(out, in);
  const Eigen::Index long_dim = std::max(out, in);
  const Eigen::Index blocks = (long_dim + s - 1) / s;
  std::vector<ApproxFactor> factors;
  factors.reserve(static_cast<std::size_t>(blocks));
  for (Eigen::Index b = 0; b < blocks; ++b) {
    Matrix block = Matrix::Zero(s, s);
    if (out >= in) {
      const Eigen::Index r0 = b * s;
      const Eigen::Index rows = std::min(s, out - r0);
      block.topRows(rows) = w.block(r0, 0, rows, s);
    } else {
      const Eigen::Index c0 = b * s;
      const Eigen::Index cols = std::min(s, in - c0);
      block.leftCols(cols) = w.block(0, c0, s, cols);
    }
    ApproxFactor f;
    f.u = closest_orthogonal(block);
    f.d = fit_diagonal(block, f.u);
    f.row_block = out >= in ? static_cast<unsigned>(b) : 0;
    f.col_block = out >= in ? 0 : static_cast<unsigned>(b);
    factors.push_back(std::move(f));
  }
  return factors;
}

// --- MZI transfer and Clements-style mesh decomposition --------------------

// Physical MZI: DC * PS(theta) * DC * PS(phi) with a 50:50 coupler
// DC = (1/sqrt2) [[1, i], [i, 1]] and PS(a) = diag(e^{ia}, 1).
// Closed form: i e^{i theta/2} [[e^{i phi} sin, cos], [e^{i phi} cos, -sin]]
// with sin/cos of theta/2.
inline Eigen::Matrix2cd mzi_transfer(double theta, double phi) {
  const Complex pre = Complex(0, 1) * std::exp(Complex(0, theta / 2.0));
  const double s = std::sin(theta / 2.0), c = std::cos(theta / 2.0);
  const Complex e = std::exp(Complex(0, phi));
  Eigen::Matrix2cd m;
  m << pre * e * s, pre * c, pre * e * c, -pre * s;
  return m;
}

namespace detail {

inline void apply_left(CMatrix& u, unsigned p, double theta, double phi) {
  const Eigen::Matrix2cd t = mzi_transfer(theta, phi);
  const Eigen::Index m = u.cols();
  for (Eigen::Index c = 0; c < m; ++c) {
    const Complex a = u(p, c), b = u(p + 1, c);
    u(p, c) = t(0, 0) * a + t(0, 1) * b;
    u(p + 1, c) = t(1, 0) * a + t(1, 1) * b;
  }
}

inline void apply_right_inverse(CMatrix& u, unsigned p, double theta, double phi) {
  const Eigen::Matrix2cd t = mzi_transfer(theta, phi).adjoint();
  const Eigen::Index m = u.rows();
  for (Eigen::Index r = 0; r < m; ++r) {
    const Complex a = u(r, p), b = u(r, p + 1);
    u(r, p) = a * t(0, 0) + b * t(1, 0);
    u(r, p + 1) = a * t(0, 1) + b * t(1, 1);
  }
}

struct NullOp {
  unsigned port;
  double theta, phi;
};

}  // namespace detail

// Interleaved (rectangular) mesh decomposition. Produces exactly
// m(m-1)/2 MZIs and m output phases with
//   u == diag(e^{i phase}) * T_last * ... * T_first.
inline MeshProgram decompose_unitary(const CMatrix& u_in) {
  const Eigen::Index m = u_in.rows();
  if (m != u_in.cols() || m == 0)
    throw DomainError("decompose_unitary needs a square matrix");
  {
    const double defect = (u_in.adjoint() * u_in - CMatrix::Identity(m, m))
                              .cwiseAbs()
                              .maxCoeff();
    if (defect > 1e-8)
      throw DomainError("input is not unitary: defect " + std::to_string(defect));
  }
  CMatrix u = u_in;
  std::vector<detail::NullOp> left_ops, right_ops;

  for (Eigen::Index diag = 1; diag < m; ++diag) {
    if (diag % 2 == 1) {
      // null along the anti-diagonal from the bottom-left via right-side ops
      for (Eigen::Index j = 0; j < diag; ++j) {
        const Eigen::Index r = m - 1 - j;
        const Eigen::Index c = diag - 1 - j;
        const unsigned p = static_cast<unsigned>(c);
        // zero u(r, c): e^{-i phi} sin(t/2) u(r,p) + cos(t/2) u(r,p+1) = 0
        const double theta = 2.0 * std::atan2(std::abs(u(r, p + 1)), std::abs(u(r, p)));
        double phi = 0.0;
        if (std::abs(u(r, p)) > 0 && std::abs(u(r, p + 1)) > 0)
          phi = std::arg(u(r, p)) - std::arg(u(r, p + 1)) - M_PI;
        detail::apply_right_inverse(u, p, theta, phi);
        right_ops.push_back({p, theta, phi});
      }
    } else {
      // null from the top-right via left-side ops
      for (Eigen::Index j = 1; j <= diag; ++j) {
        const Eigen::Index r = m + j - diag - 1;
        const Eigen::Index c = j - 1;
        const unsigned p = static_cast<unsigned>(r - 1);
        // zero u(r, c): e^{i phi} cos(t/2) u(p,c) - sin(t/2) u(p+1,c) = 0
        const double theta = 2.0 * std::atan2(std::abs(u(p, c)), std::abs(u(p + 1, c)));
        double phi = 0.0;
        if (std::abs(u(p, c)) > 0 && std::abs(u(p + 1, c)) > 0)
          phi = std::arg(u(p + 1, c)) - std::arg(u(p, c));
        detail::apply_left(u, p, theta, phi);
        left_ops.push_back({p, theta, phi});
      }
    }
  }

  // u is now diagonal: original = (prod left T)^dagger * D * (right T's).
  std::vector<Complex> d(m);
  for (Eigen::Index i = 0; i < m; ++i) d[i] = u(i, i);

  // Push every left T^dagger through D:
  //   T(theta,phi)^dagger diag(a,b) = diag(-e^{-i(theta+phi)} b, -e^{-i theta} b)
  //                                   * T(theta, arg(a/b)).
  // Consuming left ops innermost-first keeps their relative program order.
  std::vector<detail::NullOp> folded(left_ops.size());
  for (std::size_t idx = left_ops.size(); idx-- > 0;) {
    const auto& op = left_ops[idx];
    const Complex a = d[op.port], b = d[op.port + 1];
    const double phi2 = std::arg(a / b);
    d[op.port] = -std::exp(Complex(0, -(op.theta + op.phi))) * b;
    d[op.port + 1] = -std::exp(Complex(0, -op.theta)) * b;
    folded[idx] = {op.port, op.theta, phi2};
  }

  // Program order (first applied to the input first): right ops as recorded,
  // then folded left ops innermost-last.
  MeshProgram mesh;
  mesh.size = static_cast<unsigned>(m);
  mesh.mzis.reserve(right_ops.size() + folded.size());
  std::vector<unsigned> next_free(static_cast<std::size_t>(m), 0);
  auto place = [&](const detail::NullOp& op) {
    const unsigned col = std::max(next_free[op.port], next_free[op.port + 1]);
    next_free[op.port] = next_free[op.port + 1] = col + 1;
    mesh.mzis.push_back({col, op.port, op.theta, op.phi});
  };
  for (const auto& op : right_ops) place(op);
  for (std::size_t idx = folded.size(); idx-- > 0;) place(folded[idx]);

  mesh.output_phases.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) mesh.output_phases[i] = std::arg(d[i]);
  return mesh;
}

inline CMatrix reconstruct(const MeshProgram& mesh) {
  const Eigen::Index m = mesh.size;
  if (mesh.mzis.size() != static_cast<std::size_t>(m) * (m - 1) / 2)
    throw DomainError("mesh program has wrong MZI count");
  CMatrix u = CMatrix::Identity(m, m);
  // stable order: ascending layer, preserving stored order inside a layer
  std::vector<const MeshMzi*> order;
  order.reserve(mesh.mzis.size());
  for (const auto& z : mesh.mzis) order.push_back(&z);
  std::stable_sort(order.begin(), order.end(),
                   [](const MeshMzi* a, const MeshMzi* b) { return a->layer < b->layer; });
  for (const MeshMzi* z : order) detail::apply_left(u, z->top_port, z->theta, z->phi);
  for (Eigen::Index i = 0; i < m; ++i)
    u.row(i) *= std::exp(Complex(0, mesh.output_phases[i]));
  return u;
}

inline MeshProgram decompose_orthogonal(const Matrix& q) {
  return decompose_unitary(q.cast<Complex>());
}

// --- MZI cost model ---------------------------------------------------------

// Interleaved mesh for a bare m x m unitary.
inline std::uint64_t unitary_mzis(unsigned m) {
  return std::uint64_t{m} * (m - 1) / 2;
}

// Full SVD implementation of an out x in layer: U costs out(out-1)/2,
// V costs in(in-1)/2, and the diagonal costs a column of `out` MZIs,
// i.e. (out(out+1) + in(in-1)) / 2 in total.
inline std::uint64_t full_layer_mzis(unsigned out_dim, unsigned in_dim) {
  const std::uint64_t m = out_dim, n = in_dim;
  return (m * (m + 1) + n * (n - 1)) / 2;
}

// Approximated layer: ceil(long/short) blocks, each one s x s unitary plus a
// diagonal column, s(s+1)/2 MZIs per block. Zero padding is excluded.
inline std::uint64_t approx_layer_mzis(unsigned out_dim, unsigned in_dim) {
  const std::uint64_t s = std::min(out_dim, in_dim);
  const std::uint64_t long_dim = std::max(out_dim, in_dim);
  const std::uint64_t blocks = (long_dim + s - 1) / s;
  return blocks * (s * (s + 1) / 2);
}

inline CostReport mzi_cost(const std::vector<unsigned>& layer_dims,
                           const std::set<unsigned>& approx_layers) {
  if (layer_dims.size() < 2) throw DomainError("need at least one weight layer");
  CostReport rep;
  for (std::size_t l = 1; l < layer_dims.size(); ++l) {
    CostReport::Layer lay;
    lay.in_dim = layer_dims[l - 1];
    lay.out_dim = layer_dims[l];
    if (lay.in_dim == 0 || lay.out_dim == 0) throw DomainError("zero layer dimension");
    lay.approximated = approx_layers.count(static_cast<unsigned>(l)) > 0;
    lay.full_mzis = full_layer_mzis(lay.out_dim, lay.in_dim);
    lay.approx_mzis = lay.approximated ? approx_layer_mzis(lay.out_dim, lay.in_dim) : 0;
    rep.total_full += lay.full_mzis;
    rep.total_effective += lay.approximated ? lay.approx_mzis : lay.full_mzis;
    rep.per_layer.push_back(lay);
  }
  rep.area_ratio = static_cast<double>(rep.total_effective) /
                   static_cast<double>(rep.total_full);
  return rep;
}

// --- exports ----------------------------------------------------------------

// One line per MZI (`layer top_port theta phi`, 17 significant digits),
// trailing `phase p0 ... p_{m-1}` line.
inline void write_mesh_program(const std::filesystem::path& path,
                               const MeshProgram& mesh) {
  atomic_write(path, [&](std::ostream& os) {
    os.precision(17);
    for (const MeshMzi& z : mesh.mzis)
      os << z.layer << " " << z.top_port << " " << z.theta << " " << z.phi << "\n";
    os << "phase";
    for (double p : mesh.output_phases) os << " " << p;
    os << "\n";
  });
}

inline MeshProgram read_mesh_program(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open mesh file " + path.string());
  MeshProgram mesh;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    if (first == "phase") {
      double p;
      while (ls >> p) mesh.output_phases.push_back(p);
    } else {
      MeshMzi z;
      z.layer = static_cast<unsigned>(std::stoul(first));
      ls >> z.top_port >> z.theta >> z.phi;
      if (!ls) throw IoError("malformed mesh line: " + line);
      mesh.mzis.push_back(z);
    }
  }
  mesh.size = static_cast<unsigned>(mesh.output_phases.size());
  return mesh;
}

inline void write_cost_csv(const std::filesystem::path& path, const CostReport& rep) {
  atomic_write(path, [&](std::ostream& os) {
    os << "layer,out_dim,in_dim,approximated,full_mzis,approx_mzis,effective_mzis\n";
    for (std::size_t l = 0; l < rep.per_layer.size(); ++l) {
      const auto& lay = rep.per_layer[l];
      os << (l + 1) << "," << lay.out_dim << "," << lay.in_dim << ","
         << (lay.approximated ? 1 : 0) << "," << lay.full_mzis << ","
         << lay.approx_mzis << ","
         << (lay.approximated ? lay.approx_mzis : lay.full_mzis) << "\n";
    }
    os << "total,,,," << rep.total_full << ",," << rep.total_effective << "\n";
    os << "area_ratio," << rep.area_ratio << ",,,,,\n";
  });
}

}  // namespace optinc
