#pragma once

#include <Eigen/Dense>

#include "ajm/model.hpp"

namespace ajm {

// exp with saturation at x = 700; sets *overflow when hit
double guarded_exp(double x, bool* overflow = nullptr);

// c_iq = w_iq * exp(eta_gamma_i + eta_lambda_i(u_q) + eta_alpha_i(u_q) * eta_mu_i(u_q)),
// so the cumulative hazard is the row sum. Flags the state on saturation.
Eigen::MatrixXd hazard_terms(const ModelState& state);

Eigen::VectorXd cumulative_hazard(const ModelState& state);
double cumulative_hazard(const ModelState& state, int subject);

double loglik_surv(const ModelState& state);
double loglik_long(const ModelState& state);

// coefficient prior at the block's current tau2, including the
// inverse-gamma hyperprior terms for each variance parameter
double log_prior(const DesignBlock& block);

double log_ig_density(double x, double a, double b);

struct LogPosteriorValue {
  double surv = 0.0;
  double lng = 0.0;
  double prior = 0.0;
  double total = 0.0;
  bool finite = false;
};
LogPosteriorValue log_posterior(const ModelState& state);

}  // namespace ajm
