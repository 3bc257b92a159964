#include "ajm/derivatives.hpp"

#include <cmath>

#include "ajm/likelihood.hpp"

namespace ajm {

BlockGradient block_gradient(const ModelState& state, int block_index) {
  const DesignBlock& b = state.blocks()[block_index];
  const JointData& d = state.data();
  Predictor k = b.term.predictor;
  int n = d.n();

  BlockGradient g;
  g.lik_score = Eigen::VectorXd::Zero(b.p);
  g.lik_hessian = Eigen::MatrixXd::Zero(b.p, b.p);

  Eigen::VectorXd delta = d.event.cast<double>();

  if (k == Predictor::sigma) {
    Eigen::VectorXd rinv = state.rinv();
    Eigen::VectorXd resid = d.y - state.cache(Predictor::mu).at_long;
    Eigen::VectorXd r2w = resid.array().square().matrix().cwiseProduct(rinv);
    b.X_long.add_scaled_rows(r2w - Eigen::VectorXd::Ones(d.N()), g.lik_score);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(b.p, b.p);
    b.X_long.add_weighted_gram(r2w, H);
    g.lik_hessian = -2.0 * H;
  } else if (k == Predictor::mu) {
    Eigen::VectorXd rinv = state.rinv();
    Eigen::VectorXd resid = d.y - state.cache(Predictor::mu).at_long;
    b.X_long.add_scaled_rows(resid.cwiseProduct(rinv), g.lik_score);
    Eigen::MatrixXd Hl = Eigen::MatrixXd::Zero(b.p, b.p);
    b.X_long.add_weighted_gram(rinv, Hl);
    g.lik_hessian -= Hl;

    const Eigen::VectorXd& alpha_T = state.cache(Predictor::alpha).at_surv;
    b.X_surv.add_scaled_rows(delta.cwiseProduct(alpha_T), g.lik_score);

    Eigen::MatrixXd c = hazard_terms(state);
    const Eigen::MatrixXd& alpha_q = state.cache(Predictor::alpha).at_quad;
    Eigen::MatrixXd coef_s = c.cwiseProduct(alpha_q);
    Eigen::MatrixXd coef_h = coef_s.cwiseProduct(alpha_q);
    for (int i = 0; i < n; ++i) {
      int off = b.quad_offset[i];
      int w = static_cast<int>(b.X_quad[i].cols());
      g.lik_score.segment(off, w) -= b.X_quad[i].transpose() * coef_s.row(i).transpose();
      g.lik_hessian.block(off, off, w, w) -=
          b.X_quad[i].transpose() * coef_h.row(i).asDiagonal() * b.X_quad[i];
    }
  } else if (k == Predictor::lambda) {
    b.X_surv.add_scaled_rows(delta, g.lik_score);
    Eigen::MatrixXd c = hazard_terms(state);
    for (int i = 0; i < n; ++i) {
      int off = b.quad_offset[i];
      int w = static_cast<int>(b.X_quad[i].cols());
      g.lik_score.segment(off, w) -= b.X_quad[i].transpose() * c.row(i).transpose();
      g.lik_hessian.block(off, off, w, w) -=
          b.X_quad[i].transpose() * c.row(i).asDiagonal() * b.X_quad[i];
    }
  } else if (k == Predictor::alpha) {
    const Eigen::VectorXd& mu_T = state.cache(Predictor::mu).at_surv;
    b.X_surv.add_scaled_rows(delta.cwiseProduct(mu_T), g.lik_score);
    Eigen::MatrixXd c = hazard_terms(state);
    const Eigen::MatrixXd& mu_q = state.cache(Predictor::mu).at_quad;
    Eigen::MatrixXd coef_s = c.cwiseProduct(mu_q);
    Eigen::MatrixXd coef_h = coef_s.cwiseProduct(mu_q);
    for (int i = 0; i < n; ++i) {
      int off = b.quad_offset[i];
      int w = static_cast<int>(b.X_quad[i].cols());
      g.lik_score.segment(off, w) -= b.X_quad[i].transpose() * coef_s.row(i).transpose();
      g.lik_hessian.block(off, off, w, w) -=
          b.X_quad[i].transpose() * coef_h.row(i).asDiagonal() * b.X_quad[i];
    }
  } else {  // gamma
    Eigen::VectorXd Lambda = cumulative_hazard(state);
    b.X_surv.add_scaled_rows(delta - Lambda, g.lik_score);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(b.p, b.p);
    b.X_surv.add_weighted_gram(Lambda, H);
    g.lik_hessian = -H;
  }

  g.score = g.lik_score - b.P * b.beta;
  g.hessian = g.lik_hessian - b.P;
  return g;
}

Eigen::VectorXd fd_score(ModelState& state, int block_index, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("fd_score: eps must be positive");
  Eigen::VectorXd beta0 = state.blocks()[block_index].beta;
  Eigen::VectorXd out(beta0.size());
  for (Eigen::Index j = 0; j < beta0.size(); ++j) {
    Eigen::VectorXd b = beta0;
    b(j) = beta0(j) + eps;
    state.set_beta(block_index, b);
    double up = log_posterior(state).total;
    b(j) = beta0(j) - eps;
    state.set_beta(block_index, b);
    double dn = log_posterior(state).total;
    out(j) = (up - dn) / (2.0 * eps);
  }
  state.set_beta(block_index, beta0);
  return out;
}

Eigen::MatrixXd fd_hessian(ModelState& state, int block_index, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("fd_hessian: eps must be positive");
  Eigen::VectorXd beta0 = state.blocks()[block_index].beta;
  Eigen::MatrixXd out(beta0.size(), beta0.size());
  for (Eigen::Index j = 0; j < beta0.size(); ++j) {
    Eigen::VectorXd b = beta0;
    b(j) = beta0(j) + eps;
    state.set_beta(block_index, b);
    Eigen::VectorXd up = block_gradient(state, block_index).score;
    b(j) = beta0(j) - eps;
    state.set_beta(block_index, b);
    Eigen::VectorXd dn = block_gradient(state, block_index).score;
    out.col(j) = (up - dn) / (2.0 * eps);
  }
  state.set_beta(block_index, beta0);
  return out;
}

FdCheckReport fd_check(ModelState& state, double eps, double tol_score, double tol_hess) {
  if (!(eps > 0.0)) throw std::invalid_argument("fd_check: eps must be positive");
  FdCheckReport rep;
  rep.eps = eps;
  rep.tol_score = tol_score;
  rep.tol_hess = tol_hess;
  rep.all_pass = true;
  for (int bi = 0; bi < static_cast<int>(state.blocks().size()); ++bi) {
    BlockGradient g = block_gradient(state, bi);
    Eigen::VectorXd fs = fd_score(state, bi, eps);
    Eigen::MatrixXd fh = fd_hessian(state, bi, eps);
    FdCheckEntry e;
    e.block = state.blocks()[bi].term.label();
    e.score_rel_err =
        (g.score - fs).cwiseAbs().maxCoeff() / std::max(1.0, fs.cwiseAbs().maxCoeff());
    e.hess_rel_err = (g.hessian - fh).norm() / std::max(1.0, fh.norm());
    e.pass = e.score_rel_err <= tol_score && e.hess_rel_err <= tol_hess;
    rep.all_pass = rep.all_pass && e.pass;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

}  // namespace ajm
