#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ajm/formula.hpp"
#include "ajm/model.hpp"
#include "ajm/rng.hpp"

namespace test_support {

// n subjects, one or two longitudinal records each, deterministic values
inline ajm::JointData tiny_joint(int n = 3, int records_per_subject = 2) {
  ajm::JointData d;
  d.T.resize(n);
  d.event.resize(n);
  Eigen::VectorXd x1(n), x2(n);
  std::vector<double> times, ys;
  std::vector<int> subj;
  for (int i = 0; i < n; ++i) {
    d.ids.push_back("s" + std::to_string(i + 1));
    d.T(i) = 1.0 + 0.5 * i;
    d.event(i) = i % 2;
    x1(i) = -1.0 + i * 0.8;
    x2(i) = 0.5 * i - 0.7;
    for (int j = 0; j < records_per_subject; ++j) {
      subj.push_back(i);
      times.push_back(d.T(i) * (j + 1) / (records_per_subject + 1.0));
      ys.push_back(0.3 * i - 0.1 * j);
    }
  }
  d.covariates["x1"] = x1;
  d.covariates["x2"] = x2;
  d.subj = subj;
  d.t_long = Eigen::Map<Eigen::VectorXd>(times.data(), times.size());
  d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), ys.size());
  d.finalize();
  return d;
}

inline std::string full_formula_text() {
  return "lambda ~ 1 + s(time, k=10)\n"
         "gamma ~ s(x1, k=10)\n"
         "alpha ~ 1\n"
         "mu ~ 1 + s(time, k=12) + s(x2, k=10) + ri(id) + fri(id, time, k=12)\n"
         "sigma ~ 1\n";
}

inline ajm::ModelSpec full_spec() { return ajm::parse_formula(full_formula_text()); }

// perturb every block's coefficients (and variances when present)
inline void randomize_state(ajm::ModelState& state, ajm::Rng& rng, double beta_scale = 0.3) {
  for (int bi = 0; bi < static_cast<int>(state.blocks().size()); ++bi) {
    ajm::DesignBlock& b = state.blocks()[bi];
    Eigen::VectorXd beta(b.p);
    for (int j = 0; j < b.p; ++j) beta(j) = beta_scale * rng.normal();
    state.set_beta(bi, beta);
    for (int w = 0; w < static_cast<int>(b.tau2.size()); ++w)
      b.set_tau2(w, std::exp(2.0 * rng.normal()));
  }
}

// split-chain potential scale reduction for a single scalar parameter
inline double gelman_rubin(const std::vector<Eigen::VectorXd>& chains) {
  int m = static_cast<int>(chains.size());
  Eigen::Index len = chains[0].size();
  double w = 0.0, b = 0.0, grand = 0.0;
  std::vector<double> means(m);
  for (int c = 0; c < m; ++c) {
    means[c] = chains[c].mean();
    grand += means[c] / m;
  }
  for (int c = 0; c < m; ++c) {
    w += (chains[c].array() - means[c]).square().sum() / (m * (len - 1));
    b += (means[c] - grand) * (means[c] - grand) * len / (m - 1);
  }
  double var_plus = (len - 1.0) / len * w + b / len;
  return std::sqrt(var_plus / w);
}

// Kolmogorov-Smirnov distance of a sample against a cdf
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - (i + 1) / n));
    d = std::max(d, std::abs(f - i / n));
  }
  return d;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace test_support
