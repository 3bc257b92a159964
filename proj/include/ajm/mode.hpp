#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ajm/model.hpp"

namespace ajm {

struct ModeConfig {
  double tol = 1e-5;
  int max_sweeps = 200;
  int quad_points = 25;
  bool estimate_tau2 = true;
  bool whole_model_edf = false;  // AICc edf summed across penalized blocks
  double tau2_lo = 1e-4;
  double tau2_hi = 1e4;
  int tau2_grid = 15;
};

inline constexpr std::array<double, 6> step_grid{1.0, 0.5, 0.25, 0.1, 0.05, 0.01};

struct NewtonStep {
  Eigen::VectorXd direction;  // -H^{-1} s after regularization
  bool regularized = false;
  bool gradient_fallback = false;
};
NewtonStep newton_direction(const ModelState& state, int block_index);

struct StepResult {
  double nu = 0.0;
  double logpost = 0.0;  // at the accepted point
  bool stalled = false;
};
// evaluates the step grid, never accepts a decrease; on stall leaves beta unchanged
StepResult optimize_steplength(ModelState& state, int block_index,
                               const Eigen::VectorXd& direction, double current_logpost);

struct Tau2Selection {
  double tau2 = 0.0;
  double aicc = 0.0;
  double edf = 0.0;
  bool changed = false;
};
// corrected-AIC grid search for one variance parameter of a penalized block;
// commits the winning tau2, leaves beta untouched
Tau2Selection update_tau2_aicc(ModelState& state, int block_index, int which,
                               const ModeConfig& config);

struct BlockEstimate {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  std::vector<double> tau2;
  Eigen::MatrixXd cov;  // (-H)^{-1} at the mode
  double edf = 0.0;
};

struct ModeFit {
  ModelSpec spec;
  ModeConfig config;
  ModelState state;
  std::vector<BlockEstimate> blocks;
  std::vector<double> logpost_trace;     // per sweep
  std::vector<double> steplength_trace;  // per block update, sweep major
  bool converged = false;
  int sweeps = 0;
  bool any_stall = false;
  bool any_fallback = false;
  double logpost = 0.0;
};

ModeFit fit_mode(const ModelSpec& spec, const JointData& data, const ModeConfig& config = {});

// interval half-width factor for approximate 95% intervals
inline constexpr double normal_q975 = 1.96;

}  // namespace ajm
