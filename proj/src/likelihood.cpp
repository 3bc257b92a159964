#include "ajm/likelihood.hpp"

#include <cmath>

namespace ajm {

double guarded_exp(double x, bool* overflow) {
  if (x > 700.0) {
    if (overflow) *overflow = true;
    x = 700.0;
  }
  return std::exp(x);
}

Eigen::MatrixXd hazard_terms(const ModelState& state) {
  const auto& lam = state.cache(Predictor::lambda);
  const auto& gam = state.cache(Predictor::gamma);
  const auto& alp = state.cache(Predictor::alpha);
  const auto& mu = state.cache(Predictor::mu);
  const QuadratureGrid& quad = state.quad();
  int n = state.data().n();
  int Q = quad.Q();
  Eigen::MatrixXd c(n, Q);
  bool overflow = false;
  for (int i = 0; i < n; ++i) {
    double g = gam.at_surv.size() ? gam.at_surv(i) : 0.0;
    for (int q = 0; q < Q; ++q) {
      double e = g + lam.at_quad(i, q) + alp.at_quad(i, q) * mu.at_quad(i, q);
      c(i, q) = quad.weights(i, q) * guarded_exp(e, &overflow);
    }
  }
  if (overflow) state.note_overflow();
  return c;
}

Eigen::VectorXd cumulative_hazard(const ModelState& state) {
  return hazard_terms(state).rowwise().sum();
}

double cumulative_hazard(const ModelState& state, int subject) {
  return cumulative_hazard(state)(subject);
}

double loglik_surv(const ModelState& state) {
  const JointData& d = state.data();
  Eigen::VectorXd Lambda = cumulative_hazard(state);
  const auto& lam = state.cache(Predictor::lambda);
  const auto& gam = state.cache(Predictor::gamma);
  const auto& alp = state.cache(Predictor::alpha);
  const auto& mu = state.cache(Predictor::mu);
  double out = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    if (d.event(i))
      out += lam.at_surv(i) + gam.at_surv(i) + alp.at_surv(i) * mu.at_surv(i);
    out -= Lambda(i);
  }
  return out;
}

double loglik_long(const ModelState& state) {
  const JointData& d = state.data();
  if (d.N() == 0) return 0.0;
  const Eigen::VectorXd& eta_mu = state.cache(Predictor::mu).at_long;
  const Eigen::VectorXd& eta_sg = state.cache(Predictor::sigma).at_long;
  Eigen::VectorXd rinv = state.rinv();
  Eigen::VectorXd resid = d.y - eta_mu;
  double out = -0.5 * d.N() * std::log(2.0 * M_PI);
  out -= eta_sg.sum();
  out -= 0.5 * resid.array().square().matrix().dot(rinv);
  return out;
}

double log_ig_density(double x, double a, double b) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

namespace {
constexpr double ig_a = 0.001;
constexpr double ig_b = 0.001;
}  // namespace

double log_prior(const DesignBlock& block) {
  if (!block.penalized()) {
    // independent N(0, 1000^2) coefficients
    double prec = block.P(0, 0);
    return -0.5 * block.p * std::log(2.0 * M_PI / prec) -
           0.5 * prec * block.beta.squaredNorm();
  }
  double quad;
  if (block.penalty.kind == PenaltyDef::Kind::anisotropic) {
    quad = block.penalty_quad_form(0) / block.tau2[0] +
           block.penalty_quad_form(1) / block.tau2[1];
  } else {
    quad = block.penalty_quad_form(0) / block.tau2[0];
  }
  double out = -0.5 * block.prior_rank * std::log(2.0 * M_PI) + 0.5 * block.log_pdet_P -
               0.5 * quad;
  for (double t2 : block.tau2) out += log_ig_density(t2, ig_a, ig_b);
  return out;
}

LogPosteriorValue log_posterior(const ModelState& state) {
  LogPosteriorValue v;
  v.surv = loglik_surv(state);
  v.lng = loglik_long(state);
  v.prior = 0.0;
  for (const auto& b : state.blocks()) v.prior += log_prior(b);
  v.total = v.surv + v.lng + v.prior;
  v.finite = std::isfinite(v.total);
  return v;
}

}  // namespace ajm
