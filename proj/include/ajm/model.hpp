#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ajm/basis.hpp"

namespace ajm {

enum class Predictor { lambda, gamma, alpha, mu, sigma };
inline constexpr std::array<Predictor, 5> all_predictors{
    Predictor::lambda, Predictor::gamma, Predictor::alpha, Predictor::mu, Predictor::sigma};

const char* predictor_name(Predictor k);
Predictor predictor_from_name(const std::string& name);

enum class TermKind {
  intercept,
  linear,
  smooth,
  smooth_time,
  random_intercept,
  functional_random_intercept,
};
const char* term_kind_name(TermKind kind);

struct TermSpec {
  Predictor predictor{};
  TermKind kind{};
  std::string covariate;  // linear/smooth: column name; ri/fri: grouping column
  int n_knots = 0;
  int degree = 3;
  int diff_order = 2;
  bool constrained = false;

  friend bool operator==(const TermSpec&, const TermSpec&) = default;
  std::string label() const;  // e.g. "mu:fri(id,time,k=12)"
};

struct ModelSpec {
  std::vector<TermSpec> terms;
  std::vector<TermSpec> terms_for(Predictor k) const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JointData {
  std::vector<std::string> ids;  // defines subject order
  Eigen::VectorXd T;             // follow-up time per subject
  Eigen::VectorXi event;         // 0/1 per subject
  std::map<std::string, Eigen::VectorXd> covariates;  // subject-level, time constant

  std::vector<int> subj;  // subject index per longitudinal record
  Eigen::VectorXd t_long;
  Eigen::VectorXd y;

  std::vector<int> empty_subjects;  // subjects without longitudinal records

  int n() const { return static_cast<int>(ids.size()); }
  int N() const { return static_cast<int>(y.size()); }
  int subject_index(const std::string& id) const;  // -1 when absent
  const Eigen::VectorXd& covariate(const std::string& name) const;

  // sorts records per subject by time, fills empty_subjects, checks invariants
  void finalize();
};

struct QuadratureGrid {
  Eigen::MatrixXd nodes;    // n x Q, equally spaced on [0, T_i]
  Eigen::MatrixXd weights;  // trapezoid weights, rows sum to T_i
  int Q() const { return static_cast<int>(nodes.cols()); }
  static QuadratureGrid build(const Eigen::VectorXd& T, int points = 25);
};

// Row-banded design storage: row i occupies columns [offset(i), offset(i)+width).
// Dense designs use an empty offset vector and width == p.
struct Design {
  Eigen::MatrixXd vals;
  std::vector<int> offsets;
  int p = 0;

  int rows() const { return static_cast<int>(vals.rows()); }
  int width() const { return static_cast<int>(vals.cols()); }
  int offset(int i) const { return offsets.empty() ? 0 : offsets[i]; }

  Eigen::VectorXd apply(const Eigen::VectorXd& beta) const;                     // X b
  void add_scaled_rows(const Eigen::VectorXd& c, Eigen::VectorXd& out) const;   // out += X' c
  void add_weighted_gram(const Eigen::VectorXd& w, Eigen::MatrixXd& H) const;   // H += X' diag(w) X
  Eigen::VectorXd colwise_sum() const;
};

struct DesignBlock {
  TermSpec term;
  int p = 0;

  Design X_long;                      // mu, sigma: one row per longitudinal record
  Design X_surv;                      // lambda, gamma, alpha, mu: rows at T_i
  std::vector<Eigen::MatrixXd> X_quad;  // lambda, alpha, mu: per subject, Q x width
  std::vector<int> quad_offset;

  Eigen::VectorXd beta;
  std::vector<double> tau2;  // empty (unpenalized), one, or two (anisotropic)
  PenaltyDef penalty;
  SplineBasisDef basis;      // smooth kinds only
  ConstraintTransform ctrans;

  // prior machinery, kept in sync with tau2 by refresh_prior()
  Eigen::MatrixXd P;        // prior precision at current tau2
  double log_pdet_P = 0.0;  // log pseudo-determinant of P
  int prior_rank = 0;
  Eigen::VectorXd iso_eigvals;             // eigenvalues of K (isotropic)
  double iso_log_pdet_K = 0.0;
  Eigen::VectorXd aniso_s_eig, aniso_t_eig;  // marginal eigenvalues (anisotropic)

  bool penalized() const { return !tau2.empty(); }
  void set_tau2(int which, double value);
  void refresh_prior();
  // beta' K beta with K the isotropic penalty, or the expanded marginal
  // (which = 0: K_s (x) I, which = 1: I (x) K_t) for anisotropic blocks
  double penalty_quad_form(int which = 0) const;
  int penalty_rank(int which = 0) const;
};

struct RowEval {
  Eigen::VectorXd vals;
  int offset = 0;
};

struct PredictorCache {
  Eigen::VectorXd at_long;  // per longitudinal record (mu, sigma)
  Eigen::VectorXd at_surv;  // per subject at T_i (lambda, gamma, alpha, mu)
  Eigen::MatrixXd at_quad;  // n x Q (lambda, alpha, mu)
};

class ModelState {
 public:
  static ModelState build(const ModelSpec& spec, const JointData& data, int quad_points = 25);

  const JointData& data() const { return *data_; }
  const ModelSpec& spec() const { return spec_; }
  const QuadratureGrid& quad() const { return quad_; }
  std::vector<DesignBlock>& blocks() { return blocks_; }
  const std::vector<DesignBlock>& blocks() const { return blocks_; }
  const std::vector<int>& blocks_of(Predictor k) const;
  const PredictorCache& cache(Predictor k) const;

  void refresh(Predictor k);  // recompute that predictor's caches from block betas
  void refresh_all();
  void set_beta(int block, const Eigen::VectorXd& beta);  // assign + refresh

  Eigen::VectorXd rinv() const;  // exp(-2 eta_sigma) per longitudinal record

  bool overflow() const { return overflow_; }
  void note_overflow() const { overflow_ = true; }
  void clear_overflow() const { overflow_ = false; }

 private:
  const JointData* data_ = nullptr;
  ModelSpec spec_;
  QuadratureGrid quad_;
  std::vector<DesignBlock> blocks_;
  std::array<std::vector<int>, 5> by_predictor_;
  std::array<PredictorCache, 5> cache_;
  mutable bool overflow_ = false;
};

// design row of one block at (subject, time); clamping only at prediction time
RowEval block_row(const DesignBlock& block, const JointData& data, int subject, double time,
                  bool clamp = false, int* n_clamped = nullptr);

double eval_predictor(const ModelState& state, Predictor k, int subject, double time,
                      bool clamp = false);

}  // namespace ajm
