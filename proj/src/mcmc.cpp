#include "ajm/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ajm/derivatives.hpp"
#include "ajm/likelihood.hpp"

namespace ajm {

namespace {

constexpr double kIgA = 0.001;
constexpr double kIgB = 0.001;

struct Precision {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double half_logdet = 0.0;
  bool ok = false;
};

// factor A = -H; if indefinite, clamp eigenvalues at 1e-8 times the largest
Precision repaired_precision(const Eigen::MatrixXd& H) {
  Precision out;
  if (!H.allFinite()) return out;
  Eigen::MatrixXd A = -H;
  out.llt.compute(A);
  if (out.llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) return out;
    double lmax = es.eigenvalues().maxCoeff();
    double floor = lmax > 0.0 ? 1e-8 * lmax : 1e-8;
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(floor);
    A = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
    out.llt.compute(A);
    if (out.llt.info() != Eigen::Success) return out;
  }
  out.half_logdet = out.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  out.ok = true;
  return out;
}

double mvn_logdensity(const Precision& prec, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& mean) {
  const double p = static_cast<double>(x.size());
  double quad = (prec.llt.matrixU() * (x - mean)).squaredNorm();
  return prec.half_logdet - 0.5 * p * std::log(2.0 * std::numbers::pi) - 0.5 * quad;
}

}  // namespace

// log full conditional of the variances given beta, up to constants in beta
double tau2_conditional(const DesignBlock& b, double tau_s, double tau_t) {
  if (b.penalty.kind == PenaltyDef::Kind::anisotropic) {
    double max_s = b.aniso_s_eig.size() ? std::max(b.aniso_s_eig.maxCoeff(), 0.0) : 0.0;
    double max_t = b.aniso_t_eig.size() ? std::max(b.aniso_t_eig.maxCoeff(), 0.0) : 0.0;
    double tol_s = 1e-10 * max_s;
    double tol_t = 1e-10 * max_t;
    double log_pdet = 0.0;
    for (Eigen::Index a = 0; a < b.aniso_s_eig.size(); ++a) {
      for (Eigen::Index c = 0; c < b.aniso_t_eig.size(); ++c) {
        double sa = std::max(b.aniso_s_eig(a), 0.0);
        double tc = std::max(b.aniso_t_eig(c), 0.0);
        if (sa > tol_s || tc > tol_t) log_pdet += std::log(sa / tau_s + tc / tau_t);
      }
    }
    double quad = b.penalty_quad_form(0) / tau_s + b.penalty_quad_form(1) / tau_t;
    return 0.5 * log_pdet - 0.5 * quad + log_ig_density(tau_s, kIgA, kIgB) +
           log_ig_density(tau_t, kIgA, kIgB);
  }
  double rank = static_cast<double>(b.prior_rank);
  double quad = b.penalty_quad_form(0);
  return -0.5 * rank * std::log(tau_s) - 0.5 * quad / tau_s +
         log_ig_density(tau_s, kIgA, kIgB);
}

Proposal propose(ModelState& state, int block_index, Rng& rng) {
  DesignBlock& b = state.blocks()[block_index];
  Eigen::VectorXd beta0 = b.beta;
  BlockGradient g = block_gradient(state, block_index);
  Proposal out;

  Precision fwd = repaired_precision(g.hessian);
  if (!fwd.ok) {
    // symmetric random walk scaled by the Hessian diagonal where usable
    Eigen::VectorXd scale(b.p);
    for (int j = 0; j < b.p; ++j) {
      double d = std::abs(g.hessian(j, j));
      scale(j) = std::isfinite(d) && d > 1e-8 ? 1.0 / std::sqrt(d) : 1.0;
    }
    Eigen::VectorXd z(b.p);
    for (int j = 0; j < b.p; ++j) z(j) = rng.normal();
    out.beta_star = beta0 + scale.cwiseProduct(z);
    out.logq_fwd = 0.0;  // symmetric, cancels in the acceptance ratio
    out.logq_rev = 0.0;
    out.fallback = true;
    state.set_beta(block_index, out.beta_star);
    return out;
  }

  Eigen::VectorXd mean = beta0 + fwd.llt.solve(g.score);
  Eigen::VectorXd z(b.p);
  for (int j = 0; j < b.p; ++j) z(j) = rng.normal();
  out.beta_star = mean + fwd.llt.matrixU().solve(z);
  out.logq_fwd = mvn_logdensity(fwd, out.beta_star, mean);

  state.set_beta(block_index, out.beta_star);
  if (!out.beta_star.allFinite()) {
    out.logq_rev = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  BlockGradient g_rev = block_gradient(state, block_index);
  Precision rev = repaired_precision(g_rev.hessian);
  if (!rev.ok) {
    out.logq_rev = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  Eigen::VectorXd mean_rev = out.beta_star + rev.llt.solve(g_rev.score);
  out.logq_rev = mvn_logdensity(rev, beta0, mean_rev);
  return out;
}

bool mh_step(ModelState& state, int block_index, Rng& rng, double& logpost,
             MhCounters& counters) {
  Eigen::VectorXd beta0 = state.blocks()[block_index].beta;
  double lp0 = logpost;

  Proposal prop = propose(state, block_index, rng);
  ++counters.proposals;
  if (prop.fallback) counters.fallback_used = true;

  double lp1 = prop.beta_star.allFinite() ? log_posterior(state).total
                                          : -std::numeric_limits<double>::infinity();
  if (!std::isfinite(lp1) || !std::isfinite(prop.logq_fwd) || !std::isfinite(prop.logq_rev)) {
    ++counters.nonfinite;
    state.set_beta(block_index, beta0);
    return false;
  }

  double log_accept = lp1 + prop.logq_rev - lp0 - prop.logq_fwd;
  if (std::log(rng.uniform()) < log_accept) {
    ++counters.accepts;
    logpost = lp1;
    return true;
  }
  state.set_beta(block_index, beta0);
  return false;
}

double gibbs_tau2(const DesignBlock& block, Rng& rng, bool* clamped) {
  if (!block.penalized() || block.penalty.kind == PenaltyDef::Kind::anisotropic)
    throw std::invalid_argument("gibbs_tau2: needs an isotropic penalized block");
  double quad = block.penalty_quad_form(0);
  if (quad < 0.0) {
    quad = 0.0;
    if (clamped) *clamped = true;
  }
  double shape = kIgA + 0.5 * static_cast<double>(block.penalty_rank(0));
  return rng.inv_gamma(shape, kIgB + 0.5 * quad);
}

double slice_tau2_coord(const DesignBlock& block, int which, Rng& rng, int max_steps,
                        bool* hit_cap) {
  if (!block.penalized()) throw std::invalid_argument("slice_tau2_coord: unpenalized block");
  bool aniso = block.penalty.kind == PenaltyDef::Kind::anisotropic;
  if (which < 0 || which >= (aniso ? 2 : 1))
    throw std::invalid_argument("slice_tau2_coord: no such variance parameter");

  double other = aniso ? block.tau2[1 - which] : 1.0;
  auto target = [&](double theta) {
    double tau = std::exp(theta);
    double ts = which == 0 ? tau : other;
    double tt = which == 0 ? other : tau;
    return tau2_conditional(block, ts, tt) + theta;  // log-scale Jacobian
  };

  double theta0 = std::log(block.tau2[which]);
  double g0 = target(theta0);
  if (!std::isfinite(g0)) return block.tau2[which];
  double level = g0 - rng.exponential();

  // doubling expansion around the current point
  double w = 1.0;
  double lo = theta0 - w * rng.uniform();
  double hi = lo + w;
  int steps = 0;
  while (target(lo) > level || target(hi) > level) {
    if (++steps > max_steps) {
      if (hit_cap) *hit_cap = true;
      return block.tau2[which];
    }
    if (rng.uniform() < 0.5)
      lo -= hi - lo;
    else
      hi += hi - lo;
  }

  // shrinkage toward theta0 until a point inside the slice is found
  for (;;) {
    double theta1 = rng.uniform(lo, hi);
    if (target(theta1) >= level) return std::exp(theta1);
    if (theta1 < theta0)
      lo = theta1;
    else
      hi = theta1;
  }
}

PosteriorSamples run_chain(const ModelSpec& spec, const JointData& data,
                           const SamplerConfig& config, const ModeFit* init) {
  if (config.burn_in < 0 || config.burn_in >= config.n_iter)
    throw std::invalid_argument("run_chain: need 0 <= burn_in < n_iter");
  if (config.thin < 1) throw std::invalid_argument("run_chain: need thin >= 1");
  if (config.chains < 1) throw std::invalid_argument("run_chain: need chains >= 1");
  if (init && !(init->spec == spec))
    throw std::invalid_argument("run_chain: init comes from a different model");

  int kept_per_chain = (config.n_iter - config.burn_in + config.thin - 1) / config.thin;
  PosteriorSamples out;
  out.spec = spec;
  out.config = config;

  ModelState state = ModelState::build(spec, data, config.quad_points);
  int nblocks = static_cast<int>(state.blocks().size());
  out.blocks.resize(nblocks);
  for (int bi = 0; bi < nblocks; ++bi) {
    out.blocks[bi].beta.resize(config.chains * kept_per_chain, state.blocks()[bi].p);
    out.blocks[bi].tau2.resize(config.chains * kept_per_chain,
                               static_cast<Eigen::Index>(state.blocks()[bi].tau2.size()));
  }
  out.logpost.resize(config.chains * kept_per_chain);
  out.chain.resize(config.chains * kept_per_chain);

  Rng master(config.seed);
  int row = 0;
  for (int c = 0; c < config.chains; ++c) {
    Rng rng = master.substream(c);
    if (c > 0) state = ModelState::build(spec, data, config.quad_points);
    if (init) {
      for (int bi = 0; bi < nblocks; ++bi) {
        state.set_beta(bi, init->state.blocks()[bi].beta);
        for (std::size_t v = 0; v < init->state.blocks()[bi].tau2.size(); ++v)
          state.blocks()[bi].set_tau2(static_cast<int>(v), init->state.blocks()[bi].tau2[v]);
      }
    }

    std::vector<MhCounters> counters(nblocks);
    double lp = log_posterior(state).total;

    constexpr int window = 100;
    std::vector<long> win_nonfinite(window, 0), win_proposals(window, 0);

    for (int iter = 0; iter < config.n_iter; ++iter) {
      long nf_before = 0, pr_before = 0;
      for (const auto& k : counters) {
        nf_before += k.nonfinite;
        pr_before += k.proposals;
      }
      for (int bi = 0; bi < nblocks; ++bi) mh_step(state, bi, rng, lp, counters[bi]);
      for (int bi = 0; bi < nblocks; ++bi) {
        DesignBlock& b = state.blocks()[bi];
        if (!b.penalized()) continue;
        bool aniso = b.penalty.kind == PenaltyDef::Kind::anisotropic;
        if (aniso) {
          b.set_tau2(0, slice_tau2_coord(b, 0, rng));
          b.set_tau2(1, slice_tau2_coord(b, 1, rng));
        } else if (config.tau2_sampler == Tau2Sampler::slice) {
          b.set_tau2(0, slice_tau2_coord(b, 0, rng));
        } else {
          b.set_tau2(0, gibbs_tau2(b, rng));
        }
        lp = log_posterior(state).total;
      }

      long nf_after = 0, pr_after = 0;
      for (const auto& k : counters) {
        nf_after += k.nonfinite;
        pr_after += k.proposals;
      }
      win_nonfinite[iter % window] = nf_after - nf_before;
      win_proposals[iter % window] = pr_after - pr_before;
      if (iter + 1 >= window) {
        long nf = 0, pr = 0;
        for (int j = 0; j < window; ++j) {
          nf += win_nonfinite[j];
          pr += win_proposals[j];
        }
        if (pr > 0 && 2 * nf > pr) {
          std::ostringstream msg;
          msg << "chain " << c << " diverged at iteration " << iter << ": " << nf << "/" << pr
              << " proposals non-finite in the last " << window << " iterations;";
          for (int bi = 0; bi < nblocks; ++bi)
            msg << " block " << bi << " acceptance "
                << (counters[bi].proposals
                        ? double(counters[bi].accepts) / double(counters[bi].proposals)
                        : 0.0);
          throw ChainDiverged(msg.str());
        }
      }

      if (iter >= config.burn_in && (iter - config.burn_in) % config.thin == 0) {
        for (int bi = 0; bi < nblocks; ++bi) {
          out.blocks[bi].beta.row(row) = state.blocks()[bi].beta;
          for (std::size_t v = 0; v < state.blocks()[bi].tau2.size(); ++v)
            out.blocks[bi].tau2(row, static_cast<Eigen::Index>(v)) = state.blocks()[bi].tau2[v];
        }
        out.logpost(row) = lp;
        out.chain[row] = c;
        ++row;
      }
    }

    for (int bi = 0; bi < nblocks; ++bi) {
      out.blocks[bi].proposals += counters[bi].proposals;
      out.blocks[bi].accepts += counters[bi].accepts;
      out.blocks[bi].fallback_used = out.blocks[bi].fallback_used || counters[bi].fallback_used;
    }
  }
  return out;
}

double quantile(Eigen::VectorXd values, double prob) {
  if (values.size() == 0) throw std::invalid_argument("quantile: empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("quantile: prob outside [0,1]");
  std::sort(values.data(), values.data() + values.size());
  double h = (static_cast<double>(values.size()) - 1.0) * prob;
  Eigen::Index lo = static_cast<Eigen::Index>(std::floor(h));
  if (lo >= values.size() - 1) return values(values.size() - 1);
  double frac = h - static_cast<double>(lo);
  return values(lo) + frac * (values(lo + 1) - values(lo));
}

ChainSummary summarize(const PosteriorSamples& samples, const ModelState& state,
                       const Eigen::VectorXd& times) {
  if (samples.kept() == 0) throw std::invalid_argument("summarize: no kept samples");
  ChainSummary out;
  int nblocks = static_cast<int>(state.blocks().size());
  for (int bi = 0; bi < nblocks; ++bi) {
    const Eigen::MatrixXd& draws = samples.blocks[bi].beta;
    Eigen::VectorXd mean = draws.colwise().mean();
    Eigen::VectorXd lo(draws.cols()), hi(draws.cols());
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      lo(j) = quantile(draws.col(j), 0.025);
      hi(j) = quantile(draws.col(j), 0.975);
    }
    out.beta_mean.push_back(std::move(mean));
    out.beta_lo.push_back(std::move(lo));
    out.beta_hi.push_back(std::move(hi));
    out.tau2_mean.push_back(samples.blocks[bi].tau2.size()
                                ? Eigen::VectorXd(samples.blocks[bi].tau2.colwise().mean())
                                : Eigen::VectorXd());
    out.acceptance.push_back(samples.blocks[bi].acceptance());
  }

  // population-level bands: only design rows that depend on time alone
  for (Predictor k : all_predictors) {
    std::vector<int> use;
    for (int bi = 0; bi < nblocks; ++bi) {
      const TermSpec& t = state.blocks()[bi].term;
      if (t.predictor != k) continue;
      bool time_only = t.kind == TermKind::intercept || t.kind == TermKind::smooth_time ||
                       (t.kind == TermKind::linear && t.covariate == "time");
      if (time_only) use.push_back(bi);
    }
    if (use.empty()) continue;
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(samples.kept(), times.size());
    for (int bi : use) {
      const DesignBlock& b = state.blocks()[bi];
      Eigen::MatrixXd rows(times.size(), b.p);
      for (Eigen::Index ti = 0; ti < times.size(); ++ti) {
        RowEval r = block_row(b, state.data(), 0, times(ti), true);
        rows.row(ti).setZero();
        rows.row(ti).segment(r.offset, r.vals.size()) = r.vals;
      }
      eta += samples.blocks[bi].beta * rows.transpose();
    }
    PredictorBand band;
    band.times = times;
    band.mean = eta.colwise().mean();
    band.lo.resize(times.size());
    band.hi.resize(times.size());
    for (Eigen::Index ti = 0; ti < times.size(); ++ti) {
      band.lo(ti) = quantile(eta.col(ti), 0.025);
      band.hi(ti) = quantile(eta.col(ti), 0.975);
    }
    out.bands.emplace(k, std::move(band));
  }
  return out;
}

}  // namespace ajm
