#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <filesystem>

#include "optinc/photonic.hpp"
#include "optinc/presets.hpp"
#include "optinc/rng.hpp"

using namespace optinc;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = s * rng.normal();
  return m;
}

// Haar-ish random orthogonal via QR of a Gaussian matrix
Matrix random_orthogonal(Eigen::Index n, Rng& rng) {
  const Matrix g = random_matrix(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) = -q.col(i);
  return q;
}

CMatrix random_unitary(Eigen::Index n, Rng& rng) {
  CMatrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = Complex(rng.normal(), rng.normal());
  Eigen::HouseholderQR<CMatrix> qr(g);
  CMatrix q = qr.householderQ();
  const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i) q.col(i) *= r(i, i) / std::abs(r(i, i));
  return q;
}

}  // namespace

TEST(Photonic, ClosestOrthogonalFixesOrthogonalInput) {
  Rng rng(3);
  const Matrix q = random_orthogonal(4, rng);
  const Matrix u = closest_orthogonal(q);
  EXPECT_LT((u - q).cwiseAbs().maxCoeff(), 1e-10);

  // positive scaling: 2I -> I
  const Matrix two_i = 2.0 * Matrix::Identity(3, 3);
  EXPECT_LT((closest_orthogonal(two_i) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(),
            1e-12);

  // [[0,2],[-2,0]] -> [[0,1],[-1,0]]
  Matrix w(2, 2);
  w << 0, 2, -2, 0;
  Matrix expect(2, 2);
  expect << 0, 1, -1, 0;
  EXPECT_LT((closest_orthogonal(w) - expect).cwiseAbs().maxCoeff(), 1e-12);

  EXPECT_THROW(closest_orthogonal(Matrix::Zero(2, 3)), DomainError);
  bool degenerate = false;
  closest_orthogonal(Matrix::Zero(3, 3), &degenerate);
  EXPECT_TRUE(degenerate);
}

TEST(Photonic, ClosestOrthogonalBruteForceAngleSweep) {
  // 2x2 case verified against a dense sweep over rotations and reflections
  Matrix w(2, 2);
  w << 0, 2, -2, 0;
  const Matrix u = closest_orthogonal(w);
  const double res_u = (w - fit_diagonal(w, u).asDiagonal() * u).norm();
  for (int k = 0; k <= 3600; ++k) {
    const double a = k * (2.0 * M_PI / 3600.0);
    for (int refl = 0; refl < 2; ++refl) {
      Matrix q(2, 2);
      if (refl == 0)
        q << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
      else
        q << std::cos(a), std::sin(a), std::sin(a), -std::cos(a);
      const double res_q = (w - fit_diagonal(w, q).asDiagonal() * q).norm();
      EXPECT_LE(res_u, res_q + 1e-9);
    }
  }
}

TEST(Photonic, FitDiagonalExamples) {
  Matrix w = Matrix::Zero(2, 2);
  w(0, 0) = 5;
  w(1, 1) = 7;
  const Vector d = fit_diagonal(w, Matrix::Identity(2, 2));
  EXPECT_DOUBLE_EQ(d(0), 5.0);
  EXPECT_DOUBLE_EQ(d(1), 7.0);

  Rng rng(9);
  const Matrix q = random_orthogonal(4, rng);
  const Vector ones = fit_diagonal(q, q);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(ones(i), 1.0, 1e-12);

  EXPECT_THROW(fit_diagonal(Matrix::Zero(2, 2), Matrix::Zero(3, 3)), DomainError);
}

TEST(Photonic, FitDiagonalMatchesGridSearch) {
  Rng rng(41);
  for (int t = 0; t < 20; ++t) {
    const Matrix w = random_matrix(4, 4, rng);
    const Matrix u = closest_orthogonal(w);
    const Vector d = fit_diagonal(w, u);
    for (int i = 0; i < 4; ++i) {
      double best = 1e300, best_d = 0.0;
      for (double cand = -10.0; cand <= 10.0; cand += 1e-4) {
        const double r = (w.row(i) - cand * u.row(i)).squaredNorm();
        if (r < best) {
          best = r;
          best_d = cand;
        }
      }
      EXPECT_NEAR(d(i), best_d, 1e-3);
    }
  }
}

TEST(Photonic, ApproximateLayerShapes) {
  Rng rng(4);
  // orthogonal square layer: one factor, zero error
  const Matrix q = random_orthogonal(4, rng);
  const auto f = approximate_layer(q);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_LT((f[0].d.asDiagonal() * f[0].u - q).cwiseAbs().maxCoeff(), 1e-10);

  // 8x4 stack of 2I and 3R reconstructs exactly
  Matrix rot(4, 4);
  rot = random_orthogonal(4, rng);
  Matrix w(8, 4);
  w.topRows(4) = 2.0 * Matrix::Identity(4, 4);
  w.bottomRows(4) = 3.0 * rot;
  const auto f2 = approximate_layer(w);
  ASSERT_EQ(f2.size(), 2u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(f2[0].d(i), 2.0, 1e-10);
    EXPECT_NEAR(f2[1].d(i), 3.0, 1e-10);
  }
  EXPECT_EQ(f2[0].row_block, 0u);
  EXPECT_EQ(f2[1].row_block, 1u);

  // horizontal partition for wide layers
  const Matrix wide = random_matrix(4, 12, rng);
  const auto f3 = approximate_layer(wide);
  ASSERT_EQ(f3.size(), 3u);
  EXPECT_EQ(f3[2].col_block, 2u);

  EXPECT_THROW(approximate_layer(Matrix::Zero(0, 4)), DomainError);
}

TEST(Photonic, OrthogonalityOfFactors) {
  Rng rng(8);
  const Matrix w = random_matrix(128, 64, rng);
  for (const auto& f : approximate_layer(w)) {
    const Matrix err = f.u.transpose() * f.u - Matrix::Identity(64, 64);
    EXPECT_LT(err.cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_TRUE(f.d.allFinite());
  }
}

TEST(Photonic, MziTransferExamples) {
  // (0, 0): full cross with global phase i
  const Eigen::Matrix2cd cross = mzi_transfer(0.0, 0.0);
  EXPECT_LT(std::abs(cross(0, 0)), 1e-15);
  EXPECT_LT(std::abs(cross(0, 1) - Complex(0, 1)), 1e-15);
  EXPECT_LT(std::abs(cross(1, 0) - Complex(0, 1)), 1e-15);
  EXPECT_LT(std::abs(cross(1, 1)), 1e-15);

  // (pi, 0): bar state
  const Eigen::Matrix2cd bar = mzi_transfer(M_PI, 0.0);
  EXPECT_LT(std::abs(bar(0, 0) - Complex(-1, 0)), 1e-15);
  EXPECT_LT(std::abs(bar(1, 1) - Complex(1, 0)), 1e-15);
  EXPECT_LT(std::abs(bar(0, 1)), 1e-15);

  // unitarity for arbitrary angles
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Matrix2cd m =
        mzi_transfer(rng.uniform(-10, 10), rng.uniform(-10, 10));
    const Eigen::Matrix2cd err = m * m.adjoint() - Eigen::Matrix2cd::Identity();
    EXPECT_LT(err.cwiseAbs().maxCoeff(), 1e-12);
  }

  // matches the physical construction DC * PS(theta) * DC * PS(phi)
  Eigen::Matrix2cd dc;
  dc << Complex(1, 0), Complex(0, 1), Complex(0, 1), Complex(1, 0);
  dc /= std::sqrt(2.0);
  for (int t = 0; t < 20; ++t) {
    const double th = rng.uniform(0, 2 * M_PI), ph = rng.uniform(0, 2 * M_PI);
    Eigen::Matrix2cd ps_t = Eigen::Matrix2cd::Identity();
    ps_t(0, 0) = std::exp(Complex(0, th));
    Eigen::Matrix2cd ps_p = Eigen::Matrix2cd::Identity();
    ps_p(0, 0) = std::exp(Complex(0, ph));
    const Eigen::Matrix2cd physical = dc * ps_t * dc * ps_p;
    EXPECT_LT((physical - mzi_transfer(th, ph)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Photonic, DecomposeIdentity) {
  const MeshProgram mesh = decompose_unitary(CMatrix::Identity(4, 4));
  EXPECT_EQ(mesh.mzis.size(), 6u);  // m(m-1)/2
  const CMatrix back = reconstruct(mesh);
  EXPECT_LT((back - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Photonic, DecomposeRoundTrip) {
  Rng rng(77);
  for (int m : {2, 3, 4, 8}) {
    for (int t = 0; t < 10; ++t) {
      const CMatrix u = random_unitary(m, rng);
      const MeshProgram mesh = decompose_unitary(u);
      EXPECT_EQ(mesh.mzis.size(), static_cast<std::size_t>(m * (m - 1) / 2));
      EXPECT_LT((reconstruct(mesh) - u).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Photonic, DecomposeOrthogonal64) {
  Rng rng(78);
  const Matrix q = random_orthogonal(64, rng);
  const MeshProgram mesh = decompose_orthogonal(q);
  EXPECT_EQ(mesh.mzis.size(), 2016u);
  EXPECT_LT((reconstruct(mesh) - q.cast<Complex>()).cwiseAbs().maxCoeff(), 1e-7);
  // packs into the m-column rectangle
  unsigned max_layer = 0;
  for (const auto& z : mesh.mzis) max_layer = std::max(max_layer, z.layer);
  EXPECT_LT(max_layer, 64u);
}

TEST(Photonic, DecomposeRejectsNonUnitary) {
  Matrix w(3, 3);
  w.setConstant(0.5);
  try {
    decompose_orthogonal(w);
    FAIL() << "expected rejection";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("defect"), std::string::npos);
  }
}

TEST(Photonic, MeshFileRoundTrip) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "optinc_test_mesh";
  fs::create_directories(dir);
  Rng rng(5);
  const CMatrix u = random_unitary(8, rng);
  const MeshProgram mesh = decompose_unitary(u);
  write_mesh_program(dir / "m.mesh", mesh);
  const MeshProgram back = read_mesh_program(dir / "m.mesh");
  ASSERT_EQ(back.mzis.size(), mesh.mzis.size());
  EXPECT_EQ(back.size, 8u);
  EXPECT_LT((reconstruct(back) - u).cwiseAbs().maxCoeff(), 1e-8);
  fs::remove_all(dir);
}

TEST(Photonic, MziCostFormulas) {
  EXPECT_EQ(unitary_mzis(4), 6u);  // bare 4x4 unitary mesh
  EXPECT_EQ(full_layer_mzis(64, 4), 2086u);
  EXPECT_EQ(approx_layer_mzis(64, 4), 16u * 10u);
  EXPECT_EQ(approx_layer_mzis(128, 64), 2u * 2080u);

  const CostReport rep = mzi_cost({4, 64, 128}, {2});
  ASSERT_EQ(rep.per_layer.size(), 2u);
  EXPECT_EQ(rep.per_layer[0].full_mzis, 2086u);
  EXPECT_FALSE(rep.per_layer[0].approximated);
  EXPECT_TRUE(rep.per_layer[1].approximated);
  EXPECT_EQ(rep.total_effective,
            rep.per_layer[0].full_mzis + rep.per_layer[1].approx_mzis);
}

TEST(Photonic, Table1AreaRatios) {
  const double expected[4] = {39.3, 40.9, 40.4, 49.3};
  int row = 0;
  for (const Table1Preset& p : table1_presets()) {
    const CostReport rep = mzi_cost(p.layer_dims, p.approx_layers);
    EXPECT_NEAR(rep.area_ratio * 100.0, expected[row], 0.5)
        << "preset " << p.name;
    ++row;
  }
}

TEST(Photonic, ProjectionIdempotence) {
  Rng rng(6);
  const Matrix w = random_matrix(128, 64, rng);
  const auto f1 = approximate_layer(w);
  Matrix w1 = Matrix::Zero(128, 64);
  for (const auto& f : f1)
    w1.block(f.row_block * 64, 0, 64, 64) = f.d.asDiagonal() * f.u;
  const auto f2 = approximate_layer(w1);
  Matrix w2 = Matrix::Zero(128, 64);
  for (const auto& f : f2)
    w2.block(f.row_block * 64, 0, 64, 64) = f.d.asDiagonal() * f.u;
  EXPECT_LT((w2 - w1).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Photonic, ProcrustesBeatsRandomCompetitors) {
  Rng rng(99);
  for (int t = 0; t < 10; ++t) {
    const Matrix w = random_matrix(4, 4, rng);
    const Matrix u = closest_orthogonal(w);
    const double res = (w - fit_diagonal(w, u).asDiagonal() * u).norm();
    for (int k = 0; k < 100; ++k) {
      const Matrix q = random_orthogonal(4, rng);
      const double res_q = (w - fit_diagonal(w, q).asDiagonal() * q).norm();
      EXPECT_LE(res, res_q + 1e-12);
    }
  }
}

TEST(Photonic, CostCsvExport) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "optinc_test_cost";
  fs::create_directories(dir);
  write_cost_csv(dir / "c.csv", mzi_cost({4, 64, 4}, {1, 2}));
  std::ifstream is(dir / "c.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_NE(line.find("full_mzis"), std::string::npos);
  fs::remove_all(dir);
}
