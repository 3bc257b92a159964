#pragma once

#include <map>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "ajm/mcmc.hpp"
#include "ajm/mode.hpp"
#include "ajm/simulate.hpp"

namespace ajm {

struct Band {
  double lo = 0.0, hi = 0.0;
};

// Point estimate and 95% band of a fitted predictor at (subject, time).
class FitEvaluator {
 public:
  virtual ~FitEvaluator() = default;
  virtual double point(Predictor k, int subject, double t) const = 0;
  virtual Band band(Predictor k, int subject, double t) const = 0;
  // lambda + gamma combined (invariant to how the survival level is split)
  virtual double point_lg(int subject, double t) const = 0;
  virtual Band band_lg(int subject, double t) const = 0;
};

// normal approximation at the mode: eta_hat +/- 1.96 sqrt(x' cov x), per block
class ModeEvaluator : public FitEvaluator {
 public:
  explicit ModeEvaluator(const ModeFit& fit);
  double point(Predictor k, int subject, double t) const override;
  Band band(Predictor k, int subject, double t) const override;
  double point_lg(int subject, double t) const override;
  Band band_lg(int subject, double t) const override;

 private:
  const ModeFit* fit_;
};

// pointwise mean and 2.5/97.5 percentiles over kept draws
class MeanEvaluator : public FitEvaluator {
 public:
  MeanEvaluator(const ModelState& state, const PosteriorSamples& samples);
  double point(Predictor k, int subject, double t) const override;
  Band band(Predictor k, int subject, double t) const override;
  double point_lg(int subject, double t) const override;
  Band band_lg(int subject, double t) const override;

 private:
  Eigen::VectorXd eta_draws(Predictor k, int subject, double t) const;
  const ModelState* state_;
  const PosteriorSamples* samples_;
};

struct CellStats {
  double bias = 0.0;
  double mse = 0.0;
  double coverage = 0.0;
  long cells = 0;
};

struct TimeCell {
  double time = 0.0;
  CellStats stats;
};

struct ReplicateMetrics {
  std::map<Predictor, CellStats> overall;
  std::map<Predictor, std::vector<TimeCell>> per_time;
  CellStats lambda_plus_gamma;
};

// mu and sigma over the observed (subject, time) records, plus per-grid-time
// averages over all subjects
ReplicateMetrics longitudinal_metrics(const FitEvaluator& fit, const JointData& data,
                                      const SimTruth& truth);

// lambda, gamma, alpha at the follow-up times, plus per-grid-time averages
ReplicateMetrics survival_metrics(const FitEvaluator& fit, const JointData& data,
                                  const SimTruth& truth, const Eigen::VectorXd& grid);

ReplicateMetrics replicate_metrics(const FitEvaluator& fit, const JointData& data,
                                   const SimTruth& truth, const Eigen::VectorXd& grid);

struct MetricsReport {
  ReplicateMetrics mean;  // cellwise arithmetic means over replicates
  int replicates = 0;
};
MetricsReport aggregate(const std::vector<ReplicateMetrics>& reps);

}  // namespace ajm
