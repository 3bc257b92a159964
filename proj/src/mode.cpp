#include "ajm/mode.hpp"

#include <cmath>
#include <limits>

#include "ajm/derivatives.hpp"
#include "ajm/likelihood.hpp"

namespace ajm {

namespace {

struct SolveResult {
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  bool regularized = false;
};

// Cholesky of A; on failure add ridge 1e-6 * max|diag(A)|, escalating x10
SolveResult factor_spd(const Eigen::MatrixXd& A0) {
  SolveResult r;
  Eigen::MatrixXd A = A0;
  double ridge = 1e-6 * A0.diagonal().cwiseAbs().maxCoeff();
  if (!(ridge > 0.0)) ridge = 1e-8;
  for (int attempt = 0; attempt < 4; ++attempt) {
    r.llt.compute(A);
    if (r.llt.info() == Eigen::Success) {
      r.ok = true;
      return r;
    }
    A = A0 + ridge * Eigen::MatrixXd::Identity(A0.rows(), A0.cols());
    ridge *= 10.0;
    r.regularized = true;
  }
  r.ok = false;
  return r;
}

SolveResult factor_neg_hessian(const Eigen::MatrixXd& H) { return factor_spd(-H); }

// Grouped terms have block-diagonal likelihood curvature and prior precision
// (rows of one group level never touch another's columns), so refits and edf
// traces factor one group segment at a time. Returns 0 when no such structure.
int segment_width(const DesignBlock& b) {
  if (b.term.kind == TermKind::random_intercept)
    return b.penalty.K.isDiagonal(0.0) ? 1 : 0;
  if (b.term.kind == TermKind::functional_random_intercept)
    return b.penalty.marg_s.isDiagonal(0.0) ? static_cast<int>(b.penalty.marg_t.rows()) : 0;
  return 0;
}

int sample_size_for(const ModelState& state, const DesignBlock& b) {
  Predictor k = b.term.predictor;
  if (k == Predictor::mu || k == Predictor::sigma) return state.data().N();
  return state.data().n();
}

double block_edf(const Eigen::MatrixXd& lik_hessian, const Eigen::MatrixXd& P) {
  Eigen::MatrixXd B = -lik_hessian;
  Eigen::MatrixXd M = B + P;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  return ldlt.solve(B).trace();
}

}  // namespace

NewtonStep newton_direction(const ModelState& state, int block_index) {
  BlockGradient g = block_gradient(state, block_index);
  NewtonStep out;
  SolveResult f = factor_neg_hessian(g.hessian);
  if (f.ok) {
    out.direction = f.llt.solve(g.score);
    out.regularized = f.regularized;
    if (out.direction.allFinite()) return out;
  }
  // scaled gradient ascent as a last resort
  double scale = std::max(1.0, g.hessian.diagonal().cwiseAbs().maxCoeff());
  out.direction = g.score / scale;
  out.gradient_fallback = true;
  return out;
}

StepResult optimize_steplength(ModelState& state, int block_index,
                               const Eigen::VectorXd& direction, double current_logpost) {
  Eigen::VectorXd beta0 = state.blocks()[block_index].beta;
  double best_lp = -std::numeric_limits<double>::infinity();
  double best_nu = 0.0;
  for (double nu : step_grid) {
    state.set_beta(block_index, beta0 + nu * direction);
    double lp = log_posterior(state).total;
    if (std::isfinite(lp) && lp > best_lp) {
      best_lp = lp;
      best_nu = nu;
    }
  }
  StepResult res;
  if (best_lp > current_logpost) {
    state.set_beta(block_index, beta0 + best_nu * direction);
    res.nu = best_nu;
    res.logpost = best_lp;
    res.stalled = false;
  } else {
    state.set_beta(block_index, beta0);
    res.nu = 0.0;
    res.logpost = current_logpost;
    res.stalled = true;
  }
  return res;
}

Tau2Selection update_tau2_aicc(ModelState& state, int block_index, int which,
                               const ModeConfig& config) {
  DesignBlock& b = state.blocks()[block_index];
  if (!b.penalized())
    throw std::invalid_argument("update_tau2_aicc: block is unpenalized");
  if (which < 0 || which >= static_cast<int>(b.tau2.size()))
    throw std::invalid_argument("update_tau2_aicc: no such variance parameter");

  double Nk = sample_size_for(state, b);
  Eigen::VectorXd beta0 = b.beta;
  double tau0 = b.tau2[which];

  // edf contribution of the other penalized blocks under their current variances
  double edf_rest = 0.0;
  if (config.whole_model_edf) {
    for (int bj = 0; bj < static_cast<int>(state.blocks().size()); ++bj) {
      if (bj == block_index) continue;
      const DesignBlock& other = state.blocks()[bj];
      if (!other.penalized()) continue;
      BlockGradient g = block_gradient(state, bj);
      double e = block_edf(g.lik_hessian, other.P);
      if (std::isfinite(e)) edf_rest += e;
    }
  }

  // candidates only change the prior precision, so the likelihood score and
  // curvature at beta0 are computed once and reused for every refit
  BlockGradient g0 = block_gradient(state, block_index);
  const Eigen::MatrixXd B = -g0.lik_hessian;
  const int seg = segment_width(b);

  auto evaluate = [&](double cand, Tau2Selection& out) -> bool {
    b.set_tau2(which, cand);
    Eigen::VectorXd step(b.p);
    double edf = 0.0;
    if (seg > 0) {
      for (int off = 0; off < b.p; off += seg) {
        Eigen::MatrixXd Pg = b.P.block(off, off, seg, seg);
        SolveResult f = factor_spd(B.block(off, off, seg, seg) + Pg);
        if (!f.ok) return false;
        step.segment(off, seg) =
            f.llt.solve(g0.lik_score.segment(off, seg) - Pg * beta0.segment(off, seg));
        edf += f.llt.solve(B.block(off, off, seg, seg)).trace();
      }
    } else {
      SolveResult f = factor_spd(B + b.P);
      if (!f.ok) return false;
      step = f.llt.solve(g0.lik_score - b.P * beta0);
      edf = f.llt.solve(B).trace();
    }
    if (!step.allFinite() || !std::isfinite(edf)) return false;
    state.set_beta(block_index, beta0 + step);
    double lhat = loglik_surv(state) + loglik_long(state);
    state.set_beta(block_index, beta0);
    if (!std::isfinite(lhat)) return false;
    double edf_used = edf + edf_rest;
    if (edf_used >= Nk - 1.0) return false;
    out.tau2 = cand;
    out.edf = edf_used;
    out.aicc = -2.0 * lhat + 2.0 * edf_used * Nk / (Nk - edf_used - 1.0);
    return true;
  };

  auto search = [&](const Eigen::VectorXd& grid, Tau2Selection& best, bool& found) {
    for (Eigen::Index j = 0; j < grid.size(); ++j) {
      Tau2Selection cand;
      if (!evaluate(grid(j), cand)) continue;
      if (!found || cand.aicc < best.aicc) {
        best = cand;
        found = true;
      }
    }
  };

  Eigen::VectorXd coarse = Eigen::VectorXd::LinSpaced(config.tau2_grid, std::log(config.tau2_lo),
                                                      std::log(config.tau2_hi))
                               .array()
                               .exp();
  Tau2Selection best;
  bool found = false;
  search(coarse, best, found);
  if (found) {
    // one refinement pass between the coarse neighbors of the minimizer
    Eigen::Index at = 0;
    for (Eigen::Index j = 0; j < coarse.size(); ++j)
      if (coarse(j) == best.tau2) at = j;
    double lo = coarse(std::max<Eigen::Index>(at - 1, 0));
    double hi = coarse(std::min<Eigen::Index>(at + 1, coarse.size() - 1));
    if (hi > lo) {
      Eigen::VectorXd fine =
          Eigen::VectorXd::LinSpaced(config.tau2_grid, std::log(lo), std::log(hi))
              .array()
              .exp();
      search(fine, best, found);
    }
  }

  if (!found) {
    b.set_tau2(which, tau0);
    Tau2Selection unchanged;
    unchanged.tau2 = tau0;
    unchanged.changed = false;
    return unchanged;
  }
  b.set_tau2(which, best.tau2);
  best.changed = best.tau2 != tau0;
  return best;
}

ModeFit fit_mode(const ModelSpec& spec, const JointData& data, const ModeConfig& config) {
  ModeFit fit;
  fit.spec = spec;
  fit.config = config;
  fit.state = ModelState::build(spec, data, config.quad_points);
  ModelState& state = fit.state;

  double lp = log_posterior(state).total;
  double lp_prev_sweep = lp;

  // stable tau2 selections are re-checked at geometrically growing intervals
  int nb = static_cast<int>(state.blocks().size());
  std::vector<int> recheck(nb, 0), backoff(nb, 0);

  for (int sweep = 0; sweep < config.max_sweeps; ++sweep) {
    bool tau2_skipped = false;
    for (int bi = 0; bi < nb; ++bi) {
      if (state.blocks()[bi].penalized() && config.estimate_tau2) {
        if (recheck[bi] > 0) {
          --recheck[bi];
          tau2_skipped = true;
        } else {
          int nvar = static_cast<int>(state.blocks()[bi].tau2.size());
          bool moved = false;
          for (int which = 0; which < nvar; ++which)
            moved |= update_tau2_aicc(state, bi, which, config).changed;
          backoff[bi] = moved ? 0 : std::min(backoff[bi] == 0 ? 2 : 2 * backoff[bi], 64);
          recheck[bi] = backoff[bi] > 0 ? backoff[bi] - 1 : 0;
          lp = log_posterior(state).total;
        }
      }
      NewtonStep dir = newton_direction(state, bi);
      if (dir.gradient_fallback) fit.any_fallback = true;
      StepResult step = optimize_steplength(state, bi, dir.direction, lp);
      if (step.stalled) fit.any_stall = true;
      lp = step.logpost;
      fit.steplength_trace.push_back(step.nu);
    }
    fit.logpost_trace.push_back(lp);
    fit.sweeps = sweep + 1;
    double delta = std::abs(lp - lp_prev_sweep);
    lp_prev_sweep = lp;
    if (delta < config.tol) {
      if (tau2_skipped) {
        // convergence only counts on a sweep where every tau2 was re-selected
        std::fill(recheck.begin(), recheck.end(), 0);
        continue;
      }
      fit.converged = std::isfinite(config.tol);
      break;
    }
  }

  fit.logpost = lp;
  for (int bi = 0; bi < static_cast<int>(state.blocks().size()); ++bi) {
    const DesignBlock& b = state.blocks()[bi];
    BlockGradient g = block_gradient(state, bi);
    BlockEstimate est;
    est.beta = b.beta;
    est.tau2 = b.tau2;
    SolveResult f = factor_neg_hessian(g.hessian);
    if (f.ok) {
      est.cov = f.llt.solve(Eigen::MatrixXd::Identity(b.p, b.p));
      est.se = est.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    } else {
      est.cov = Eigen::MatrixXd::Constant(b.p, b.p, std::numeric_limits<double>::quiet_NaN());
      est.se = Eigen::VectorXd::Constant(b.p, std::numeric_limits<double>::quiet_NaN());
    }
    est.edf = b.penalized() ? block_edf(g.lik_hessian, b.P) : double(b.p);
    fit.blocks.push_back(std::move(est));
  }
  return fit;
}

}  // namespace ajm
