#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "ajm/basis.hpp"
#include "ajm/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ajm;
using test_support::max_abs_diff;

namespace {

// textbook Cox-de Boor recursion, half-open support intervals
double cox_de_boor(const Eigen::VectorXd& k, int i, int d, double x) {
  if (d == 0) return (k(i) <= x && x < k(i + 1)) ? 1.0 : 0.0;
  double out = 0.0;
  double dl = k(i + d) - k(i);
  if (dl > 0.0) out += (x - k(i)) / dl * cox_de_boor(k, i, d - 1, x);
  double dr = k(i + d + 1) - k(i + 1);
  if (dr > 0.0) out += (k(i + d + 1) - x) / dr * cox_de_boor(k, i + 1, d - 1, x);
  return out;
}

Eigen::MatrixXd kron_oracle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

Eigen::MatrixXd random_psd(int d, Rng& rng) {
  Eigen::MatrixXd M(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) M(i, j) = rng.normal();
  return M.transpose() * M;
}

}  // namespace

TEST_CASE("bspline rows are a partition of unity") {
  Rng rng(11);
  for (int degree = 0; degree <= 3; ++degree) {
    SplineBasisDef def = SplineBasisDef::equidistant(0.0, 1.0, 2 * (degree + 1) + 3, degree);
    Eigen::VectorXd t(50);
    for (int i = 0; i < t.size(); ++i) t(i) = rng.uniform();
    Eigen::MatrixXd X = bspline_design(def, t);
    for (int i = 0; i < X.rows(); ++i) {
      CHECK(X.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(X.row(i).minCoeff() >= 0.0);
      CHECK(X.row(i).maxCoeff() <= 1.0);
    }
  }
}

TEST_CASE("degree zero basis is an interval indicator") {
  SplineBasisDef def;
  def.degree = 0;
  def.knots = Eigen::Vector3d(0.0, 1.0, 2.0);
  REQUIRE(def.n_basis() == 2);
  Eigen::VectorXd row = bspline_row(def, 0.5);
  CHECK(row(0) == 1.0);
  CHECK(row(1) == 0.0);
  row = bspline_row(def, 1.5);
  CHECK(row(0) == 0.0);
  CHECK(row(1) == 1.0);
}

TEST_CASE("cubic basis matches the naive recursion") {
  SplineBasisDef def = SplineBasisDef::equidistant(0.0, 120.0, 12, 3);
  REQUIRE(def.n_basis() == 8);
  Rng rng(3);
  std::vector<double> points{60.0, 0.0, 119.9};
  for (int i = 0; i < 20; ++i) points.push_back(120.0 * rng.uniform());
  for (double t : points) {
    Eigen::VectorXd row = bspline_row(def, t);
    for (int j = 0; j < def.n_basis(); ++j)
      CHECK(row(j) == doctest::Approx(cox_de_boor(def.knots, j, 3, t)).epsilon(1e-12));
  }
}

TEST_CASE("basis evaluation outside the knot range") {
  SplineBasisDef def = SplineBasisDef::equidistant(0.0, 2.0, 10, 3);

  SUBCASE("throws naming the offending value") {
    CHECK_THROWS_AS(bspline_row(def, 2.5), std::out_of_range);
    try {
      bspline_row(def, 2.5);
    } catch (const std::out_of_range& e) {
      CHECK(std::string(e.what()).find("2.5") != std::string::npos);
    }
  }

  SUBCASE("the closed upper endpoint is inside") {
    Eigen::VectorXd row = bspline_row(def, 2.0);
    CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row(def.n_basis() - 1) == doctest::Approx(1.0));
  }

  SUBCASE("clamping maps outside points to the boundary and counts them") {
    int clamped = 0;
    Eigen::VectorXd row = bspline_row(def, 3.7, true, &clamped);
    CHECK(clamped == 1);
    CHECK(max_abs_diff(row, bspline_row(def, 2.0)) == 0.0);
  }
}

TEST_CASE("difference penalty matrices") {
  SUBCASE("first order, dimension 3, by hand") {
    PenaltyDef pen = difference_penalty(3, 1);
    Eigen::MatrixXd expect(3, 3);
    expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    CHECK(max_abs_diff(pen.K, expect) == 0.0);
  }

  SUBCASE("annihilates polynomials below the order") {
    for (int D : {5, 9}) {
      for (int r = 1; r <= 3; ++r) {
        PenaltyDef pen = difference_penalty(D, r);
        for (int deg = 0; deg < r; ++deg) {
          Eigen::VectorXd v(D);
          for (int j = 0; j < D; ++j) v(j) = std::pow(j + 1.0, deg);
          CHECK((pen.K * v).cwiseAbs().maxCoeff() < 1e-10);
        }
        CHECK(max_abs_diff(pen.K, pen.K.transpose()) == 0.0);
      }
    }
  }

  SUBCASE("rank is dimension minus order") {
    PenaltyDef pen = difference_penalty(7, 2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pen.K);
    int rank = (eig.eigenvalues().array() > 1e-10 * eig.eigenvalues().maxCoeff()).count();
    CHECK(rank == 5);
  }

  SUBCASE("order must be below the dimension") {
    CHECK_THROWS_AS(difference_penalty(4, 4), std::invalid_argument);
    CHECK_THROWS_AS(difference_matrix(4, 5), std::invalid_argument);
  }
}

TEST_CASE("sum-to-zero reparameterization") {
  SplineBasisDef def = SplineBasisDef::equidistant(0.0, 1.0, 12, 3);
  Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(40, 0.0, 1.0);
  Eigen::MatrixXd X = bspline_design(def, grid);
  PenaltyDef pen = difference_penalty(def.n_basis(), 2);
  SumToZero stz = sum_to_zero(X, pen);

  SUBCASE("constrained design has zero column sums") {
    REQUIRE(stz.X.cols() == def.n_basis() - 1);
    CHECK(stz.X.colwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    CHECK(max_abs_diff(stz.penalty.K,
                       stz.transform.Z.transpose() * pen.K * stz.transform.Z) < 1e-12);
  }

  SUBCASE("two columns reduce to the single contrast") {
    Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(2, 2);
    SumToZero s2 = sum_to_zero(I2, zero_penalty(2));
    REQUIRE(s2.X.cols() == 1);
    CHECK(s2.X(0, 0) == doctest::Approx(-s2.X(1, 0)));
    CHECK(std::abs(s2.X(0, 0)) > 0.1);
  }

  SUBCASE("least-squares fits with an intercept are unchanged") {
    Rng rng(5);
    Eigen::VectorXd y(grid.size());
    for (int i = 0; i < y.size(); ++i) y(i) = std::sin(6.0 * grid(i)) + 0.1 * rng.normal();
    Eigen::MatrixXd A1(X.rows(), X.cols() + 1), A2(X.rows(), stz.X.cols() + 1);
    A1 << Eigen::VectorXd::Ones(X.rows()), X;
    A2 << Eigen::VectorXd::Ones(X.rows()), stz.X;
    Eigen::VectorXd fit1 = A1 * A1.colPivHouseholderQr().solve(y);
    Eigen::VectorXd fit2 = A2 * A2.colPivHouseholderQr().solve(y);
    CHECK(max_abs_diff(fit1, fit2) < 1e-8);
  }

  SUBCASE("applying the constraint twice keeps full column rank") {
    SumToZero again = sum_to_zero(stz.X, stz.penalty);
    REQUIRE(again.X.cols() == def.n_basis() - 2);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(again.transform.Z);
    int rank =
        (svd.singularValues().array() > 1e-10 * svd.singularValues().maxCoeff()).count();
    CHECK(rank == def.n_basis() - 2);
  }

  SUBCASE("a design annihilated by the constraint is flagged") {
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(3, 2);
    SumToZero flat = sum_to_zero(ones, zero_penalty(2));
    CHECK(!flat.transform.warning.empty());
  }
}

TEST_CASE("row tensor product") {
  SUBCASE("single-row example") {
    Eigen::MatrixXd A(1, 2), B(1, 2);
    A << 1, 2;
    B << 3, 4;
    Eigen::MatrixXd T = row_tensor(A, B);
    Eigen::MatrixXd expect(1, 4);
    expect << 3, 4, 6, 8;
    CHECK(max_abs_diff(T, expect) == 0.0);
  }

  SUBCASE("a ones column is the identity factor") {
    Rng rng(7);
    Eigen::MatrixXd A(4, 3);
    for (int i = 0; i < A.size(); ++i) A(i / 3, i % 3) = rng.normal();
    CHECK(max_abs_diff(row_tensor(A, Eigen::MatrixXd::Ones(4, 1)), A) == 0.0);
  }

  SUBCASE("matches the looped per-row Kronecker oracle") {
    Rng rng(13);
    Eigen::MatrixXd A(5, 3), B(5, 2);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 3; ++j) A(i, j) = rng.normal();
      for (int j = 0; j < 2; ++j) B(i, j) = rng.normal();
    }
    Eigen::MatrixXd T = row_tensor(A, B);
    REQUIRE(T.rows() == 5);
    REQUIRE(T.cols() == 6);
    for (int i = 0; i < 5; ++i)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 2; ++b) CHECK(T(i, a * 2 + b) == A(i, a) * B(i, b));
  }

  SUBCASE("row count mismatch is an error") {
    CHECK_THROWS_AS(row_tensor(Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(3, 1)),
                    std::invalid_argument);
  }
}

TEST_CASE("anisotropic penalty assembly") {
  SUBCASE("scalar time marginal") {
    Eigen::MatrixXd Ks = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd Kt(1, 1);
    Kt << 2.0;
    Eigen::MatrixXd P = anisotropic_penalty(Ks, Kt, 1.0, 2.0);
    CHECK(max_abs_diff(P, 2.0 * Eigen::MatrixXd::Identity(2, 2)) < 1e-14);
  }

  SUBCASE("equal variances factor out") {
    Rng rng(17);
    Eigen::MatrixXd Ks = random_psd(3, rng), Kt = random_psd(4, rng);
    Eigen::MatrixXd P = anisotropic_penalty(Ks, Kt, 0.5, 0.5);
    Eigen::MatrixXd expect =
        2.0 * (kron_oracle(Ks, Eigen::MatrixXd::Identity(4, 4)) +
               kron_oracle(Eigen::MatrixXd::Identity(3, 3), Kt));
    CHECK(max_abs_diff(P, expect) < 1e-10);
  }

  SUBCASE("matches the dense Kronecker oracle") {
    Rng rng(19);
    Eigen::MatrixXd Ks = random_psd(3, rng), Kt = random_psd(4, rng);
    double ts = 0.7, tt = 2.3;
    Eigen::MatrixXd expect = kron_oracle(Ks, Eigen::MatrixXd::Identity(4, 4)) / ts +
                             kron_oracle(Eigen::MatrixXd::Identity(3, 3), Kt) / tt;
    CHECK(max_abs_diff(anisotropic_penalty(Ks, Kt, ts, tt), expect) < 1e-10);
  }

  SUBCASE("quadratic form stays nonnegative") {
    Rng rng(23);
    Eigen::MatrixXd Ks = random_psd(3, rng), Kt = random_psd(4, rng);
    Eigen::MatrixXd P = anisotropic_penalty(Ks, Kt, 1.3, 0.4);
    for (int trial = 0; trial < 1000; ++trial) {
      Eigen::VectorXd beta(12);
      for (int j = 0; j < 12; ++j) beta(j) = rng.normal();
      CHECK(beta.dot(P * beta) >= -1e-10);
    }
  }

  SUBCASE("variances must be positive") {
    Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(anisotropic_penalty(I2, I2, 0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(anisotropic_penalty(I2, I2, 1.0, -2.0), std::domain_error);
  }
}
