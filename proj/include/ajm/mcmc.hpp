#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ajm/mode.hpp"
#include "ajm/model.hpp"
#include "ajm/rng.hpp"

namespace ajm {

enum class Tau2Sampler { automatic, gibbs, slice };

struct SamplerConfig {
  int n_iter = 23000;
  int burn_in = 3000;
  int thin = 20;
  std::uint64_t seed = 1;
  int chains = 1;
  Tau2Sampler tau2_sampler = Tau2Sampler::automatic;
  int quad_points = 25;
};

class ChainDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Proposal {
  Eigen::VectorXd beta_star;
  double logq_fwd = 0.0;
  double logq_rev = 0.0;   // density of returning to the old beta from beta_star
  bool fallback = false;   // random-walk fallback when -H is irreparable
};

// Taylor proposal N(beta - H^{-1} s, (-H)^{-1}); leaves the state at beta_star
// with caches refreshed so the caller can evaluate the target there
Proposal propose(ModelState& state, int block_index, Rng& rng);

struct MhCounters {
  long proposals = 0;
  long accepts = 0;
  long nonfinite = 0;
  bool fallback_used = false;
};

// one Metropolis-Hastings update; logpost holds the current total on entry and exit
bool mh_step(ModelState& state, int block_index, Rng& rng, double& logpost, MhCounters& counters);

// conjugate inverse-gamma draw for an isotropic penalized block; a negative
// quadratic form (numerical noise) is clamped to zero and reported
double gibbs_tau2(const DesignBlock& block, Rng& rng, bool* clamped = nullptr);

// log full conditional of the variances given beta, up to constants in beta;
// tau_t is ignored for isotropic blocks
double tau2_conditional(const DesignBlock& block, double tau_s, double tau_t = 1.0);

// univariate slice update (log scale, stepping out + shrinkage) for one
// variance of a penalized block; returns the new tau2
double slice_tau2_coord(const DesignBlock& block, int which, Rng& rng,
                        int max_steps = 100, bool* hit_cap = nullptr);

struct BlockSamples {
  Eigen::MatrixXd beta;  // kept x p
  Eigen::MatrixXd tau2;  // kept x (#variances)
  long proposals = 0;
  long accepts = 0;
  bool fallback_used = false;
  double acceptance() const { return proposals ? double(accepts) / double(proposals) : 0.0; }
};

struct PosteriorSamples {
  ModelSpec spec;
  SamplerConfig config;
  std::vector<BlockSamples> blocks;
  Eigen::VectorXd logpost;  // kept
  std::vector<int> chain;   // chain index per kept draw
  int kept() const { return static_cast<int>(logpost.size()); }
};

PosteriorSamples run_chain(const ModelSpec& spec, const JointData& data,
                           const SamplerConfig& config, const ModeFit* init = nullptr);

struct PredictorBand {
  Eigen::VectorXd times, mean, lo, hi;
};

struct ChainSummary {
  std::map<Predictor, PredictorBand> bands;  // subject-independent predictors only
  std::vector<Eigen::VectorXd> beta_mean;    // per block
  std::vector<Eigen::VectorXd> beta_lo, beta_hi;
  std::vector<Eigen::VectorXd> tau2_mean;
  std::vector<double> acceptance;
};

ChainSummary summarize(const PosteriorSamples& samples, const ModelState& state,
                       const Eigen::VectorXd& times);

// linear-interpolation quantile of a column vector (R type 7)
double quantile(Eigen::VectorXd values, double prob);

}  // namespace ajm
