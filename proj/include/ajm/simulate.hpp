#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

#include "ajm/model.hpp"
#include "ajm/rng.hpp"

namespace ajm {

// Data-generating configuration. Presets fix the published truth functions;
// custom instances (tests) may replace any field but cannot be serialized.
struct SimSetting {
  std::string name = "custom";
  int n = 0;
  Eigen::VectorXd grid;       // longitudinal observation grid, ascending, starts at 0
  double missing_frac = 0.0;  // fraction of records removed after censoring
  double error_sd = 0.3;
  double re_var = 0.25;       // random intercept variance
  double tau2_s = 1.0;        // FRI subject variance
  double tau2_t = 0.2;        // FRI time variance
  int fri_knots = 12;
  int fri_degree = 3;
  int fri_diff_order = 2;
  std::uint64_t seed = 1;

  double mu_intercept = 0.5;
  std::function<double(double)> f_mu_time;   // time trend in eta_mu
  std::function<double(double)> f_mu_x2;     // covariate effect in eta_mu
  std::function<double(double)> f_gamma_x1;  // eta_gamma
  std::function<double(double)> eta_lambda;  // log baseline hazard
  std::function<double(double)> eta_alpha;   // association

  double max_time() const { return grid(grid.size() - 1); }

  static SimSetting preset(const std::string& name, std::uint64_t seed);
  static bool is_preset(const std::string& name);
};

struct SimTruth {
  SimSetting setting;
  Eigen::VectorXd x1, x2, r;   // per subject
  Eigen::MatrixXd fri_coef;    // n x (D-1), constrained time-marginal coefficients
  SplineBasisDef fri_basis;
  Eigen::MatrixXd fri_Z;
  Eigen::VectorXd event_time;   // inversion solution; +inf when past the window
  Eigen::VectorXd censor_time;  // uniform censoring draw

  double fri(int subject, double t) const;
  double eta_mu(int subject, double t) const;
  double eta(Predictor k, int subject, double t) const;
  double hazard(int subject, double t) const;
};

// covariates, random intercepts and FRI coefficients for all subjects
SimTruth draw_trajectories(const SimSetting& setting);

// event time by inverting the cumulative hazard (fine trapezoid + bisection),
// plus the uniform censoring draw; pair (event_time, censor_time)
std::pair<double, double> draw_survival_one(const SimSetting& setting, const SimTruth& truth,
                                            int subject, Rng& rng);
void draw_survival(const SimSetting& setting, SimTruth& truth);

struct SimResult {
  JointData data;
  SimTruth truth;
};
SimResult assemble_dataset(const SimSetting& setting);

inline constexpr int fine_hazard_nodes = 1000;
inline constexpr double bisect_tol = 1e-8;

}  // namespace ajm
