#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "ajm/derivatives.hpp"
#include "ajm/likelihood.hpp"
#include "ajm/model.hpp"
#include "ajm/rng.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ajm;
using test_support::max_abs_diff;
using test_support::tiny_joint;

namespace {

TermSpec term(Predictor k, TermKind kind, std::string cov = "", int knots = 0,
              bool constrained = false) {
  TermSpec t;
  t.predictor = k;
  t.kind = kind;
  t.covariate = std::move(cov);
  t.n_knots = knots;
  t.constrained = constrained;
  return t;
}

Eigen::MatrixXd densify(const Design& D) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(D.rows(), D.p);
  for (int i = 0; i < D.rows(); ++i)
    out.block(i, D.offset(i), 1, D.width()) = D.vals.row(i);
  return out;
}

}  // namespace

TEST_CASE("analytic score vanishes at an independently located maximum") {
  JointData data;
  data.ids = {"a", "b"};
  data.T = Eigen::Vector2d(1.3, 0.9);
  data.event = Eigen::Vector2i(1, 1);
  data.covariates["x1"] = Eigen::Vector2d(0.8, -0.4);
  data.finalize();

  ModelSpec spec;
  spec.terms = {term(Predictor::gamma, TermKind::intercept),
                term(Predictor::gamma, TermKind::linear, "x1")};
  ModelState st = ModelState::build(spec, data);

  auto objective = [&](double b0, double b1) {
    st.set_beta(0, Eigen::VectorXd::Constant(1, b0));
    st.set_beta(1, Eigen::VectorXd::Constant(1, b1));
    return log_posterior(st).total;
  };

  // nested grid refinement, no derivative information
  double c0 = 0.0, c1 = 0.0, half = 2.0;
  for (int round = 0; round < 9; ++round) {
    double best = -std::numeric_limits<double>::infinity();
    double b0 = c0, b1 = c1;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j) {
        double v = objective(c0 + half * i / 10.0, c1 + half * j / 10.0);
        if (v > best) {
          best = v;
          b0 = c0 + half * i / 10.0;
          b1 = c1 + half * j / 10.0;
        }
      }
    c0 = b0;
    c1 = b1;
    half /= 10.0;
  }

  objective(c0, c1);
  for (int bi : {0, 1}) {
    BlockGradient g = block_gradient(st, bi);
    CHECK(std::abs(g.score(0)) < 1e-3);
    // one Newton step from the grid optimum barely moves
    CHECK(std::abs(g.score(0) / g.hessian(0, 0)) < 1e-4);
  }
}

TEST_CASE("longitudinal score is the weighted residual projection when alpha is absent") {
  JointData data = tiny_joint(4, 3);
  ModelSpec spec;
  spec.terms = {term(Predictor::lambda, TermKind::intercept),
                term(Predictor::mu, TermKind::intercept),
                term(Predictor::mu, TermKind::smooth, "x2", 10, true),
                term(Predictor::sigma, TermKind::intercept)};
  ModelState st = ModelState::build(spec, data);
  Rng rng(71);
  test_support::randomize_state(st, rng);

  Eigen::VectorXd rinv = st.rinv();
  Eigen::VectorXd resid = data.y - st.cache(Predictor::mu).at_long;
  for (int bi : st.blocks_of(Predictor::mu)) {
    const DesignBlock& b = st.blocks()[bi];
    Eigen::MatrixXd X = densify(b.X_long);
    BlockGradient g = block_gradient(st, bi);
    Eigen::VectorXd expect_score = X.transpose() * rinv.asDiagonal() * resid - b.P * b.beta;
    Eigen::MatrixXd expect_hess = -X.transpose() * rinv.asDiagonal() * X - b.P;
    CHECK(max_abs_diff(g.score, expect_score) < 1e-10);
    CHECK(max_abs_diff(g.hessian, expect_hess) < 1e-10);
  }
}

TEST_CASE("time-constant survival curvature is the integrated hazard outer product") {
  JointData data;
  data.ids = {"a"};
  data.T = Eigen::VectorXd::Constant(1, 2.0);
  data.event = Eigen::VectorXi::Ones(1);
  data.covariates["x1"] = Eigen::VectorXd::Constant(1, -0.6);
  data.finalize();

  ModelSpec spec;
  spec.terms = {term(Predictor::gamma, TermKind::intercept),
                term(Predictor::gamma, TermKind::linear, "x1")};
  ModelState st = ModelState::build(spec, data);

  // all-zero coefficients: unit hazard, cumulative hazard T = 2
  BlockGradient g0 = block_gradient(st, 0);
  CHECK(g0.lik_hessian(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(g0.hessian(0, 0) == doctest::Approx(-2.0 - 1e-6).epsilon(1e-12));
  CHECK(g0.score(0) == doctest::Approx(1.0 - 2.0).epsilon(1e-12));

  BlockGradient g1 = block_gradient(st, 1);
  CHECK(g1.lik_hessian(0, 0) == doctest::Approx(-0.36 * 2.0).epsilon(1e-12));
  CHECK(g1.score(0) == doctest::Approx(-0.6 * (1.0 - 2.0)).epsilon(1e-12));
}

TEST_CASE("noise curvature vanishes at zero residuals") {
  JointData data = tiny_joint(3, 2);
  data.y.setConstant(1.5);
  ModelSpec spec;
  spec.terms = {term(Predictor::mu, TermKind::intercept),
                term(Predictor::sigma, TermKind::intercept)};
  ModelState st = ModelState::build(spec, data);
  REQUIRE(st.blocks()[0].beta(0) == 1.5);

  int sg = st.blocks_of(Predictor::sigma)[0];
  BlockGradient g = block_gradient(st, sg);
  CHECK(g.lik_hessian(0, 0) == doctest::Approx(0.0));
  CHECK(g.hessian(0, 0) == doctest::Approx(-1e-6).epsilon(1e-12));
  CHECK(g.score(0) == doctest::Approx(-data.N()).epsilon(1e-12));
}

TEST_CASE("finite differences confirm every block") {
  JointData data = tiny_joint(3, 2);
  ModelState st = ModelState::build(test_support::full_spec(), data);
  Rng rng(73);
  test_support::randomize_state(st, rng);
  FdCheckReport rep = fd_check(st);
  REQUIRE(rep.entries.size() == st.blocks().size());
  for (const auto& e : rep.entries) {
    INFO(e.block, " score ", e.score_rel_err, " hess ", e.hess_rel_err);
    CHECK(e.pass);
  }
  CHECK(rep.all_pass);

  SUBCASE("the report arithmetic is the documented formula") {
    BlockGradient g = block_gradient(st, 0);
    Eigen::VectorXd fs = fd_score(st, 0, rep.eps);
    Eigen::MatrixXd fh = fd_hessian(st, 0, rep.eps);
    double se =
        (g.score - fs).cwiseAbs().maxCoeff() / std::max(1.0, fs.cwiseAbs().maxCoeff());
    double he = (g.hessian - fh).norm() / std::max(1.0, fh.norm());
    CHECK(rep.entries[0].score_rel_err == doctest::Approx(se).epsilon(1e-12));
    CHECK(rep.entries[0].hess_rel_err == doctest::Approx(he).epsilon(1e-12));
  }

  SUBCASE("a corrupted coefficient is flagged") {
    // move one block far from where the finite differences were taken:
    // recompute at a state whose analytic parts we intentionally mismatch
    Eigen::VectorXd fs = fd_score(st, 0, 1e-5);
    BlockGradient g = block_gradient(st, 0);
    Eigen::VectorXd bad = g.score;
    bad(0) += 1.0;
    double rel = (bad - fs).cwiseAbs().maxCoeff() / std::max(1.0, fs.cwiseAbs().maxCoeff());
    CHECK(rel > rep.tol_score);
  }
}

TEST_CASE("finite difference helpers reject a zero step and restore state") {
  JointData data = tiny_joint(3, 2);
  ModelState st = ModelState::build(test_support::full_spec(), data);
  Rng rng(79);
  test_support::randomize_state(st, rng);
  CHECK_THROWS_AS(fd_score(st, 0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fd_hessian(st, 0, -1e-5), std::invalid_argument);

  Eigen::VectorXd before = st.blocks()[2].beta;
  double lp_before = log_posterior(st).total;
  fd_score(st, 2, 1e-5);
  fd_hessian(st, 2, 1e-4);
  CHECK(max_abs_diff(st.blocks()[2].beta, before) == 0.0);
  CHECK(log_posterior(st).total == lp_before);
}

TEST_CASE("hessians are symmetric and survival blocks are concave") {
  JointData data = tiny_joint(4, 3);
  ModelState st = ModelState::build(test_support::full_spec(), data);
  Rng rng(83);
  test_support::randomize_state(st, rng);
  for (int bi = 0; bi < static_cast<int>(st.blocks().size()); ++bi) {
    BlockGradient g = block_gradient(st, bi);
    CHECK(max_abs_diff(g.hessian, g.hessian.transpose()) < 1e-12);
    Predictor k = st.blocks()[bi].term.predictor;
    if (k == Predictor::lambda || k == Predictor::gamma || k == Predictor::alpha) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.lik_hessian);
      CHECK(eig.eigenvalues().maxCoeff() <= 1e-8);
    }
  }
}
