#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ajm/model.hpp"

namespace ajm {

struct BlockGradient {
  Eigen::VectorXd lik_score;
  Eigen::MatrixXd lik_hessian;
  Eigen::VectorXd score;      // lik_score - P beta
  Eigen::MatrixXd hessian;    // lik_hessian - P
};

BlockGradient block_gradient(const ModelState& state, int block_index);

// central finite differences; mutate the state transiently and restore it
Eigen::VectorXd fd_score(ModelState& state, int block_index, double eps);
Eigen::MatrixXd fd_hessian(ModelState& state, int block_index, double eps);

struct FdCheckEntry {
  std::string block;
  double score_rel_err = 0.0;
  double hess_rel_err = 0.0;
  bool pass = false;
};

struct FdCheckReport {
  double eps = 0.0, tol_score = 0.0, tol_hess = 0.0;
  std::vector<FdCheckEntry> entries;
  bool all_pass = false;
};

FdCheckReport fd_check(ModelState& state, double eps = 1e-5, double tol_score = 1e-4,
                       double tol_hess = 1e-3);

}  // namespace ajm
