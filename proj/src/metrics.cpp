#include "ajm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace ajm {

namespace {

struct CellAccum {
  double bias = 0.0, mse = 0.0, cover = 0.0;
  long cells = 0;

  void add(double est, double truth, const Band& band) {
    double err = est - truth;
    bias += err;
    mse += err * err;
    if (truth >= band.lo && truth <= band.hi) cover += 1.0;  // edge counts as covered
    ++cells;
  }
  CellStats stats() const {
    CellStats s;
    s.cells = cells;
    if (cells > 0) {
      s.bias = bias / cells;
      s.mse = mse / cells;
      s.coverage = cover / cells;
    }
    return s;
  }
};

}  // namespace

ModeEvaluator::ModeEvaluator(const ModeFit& fit) : fit_(&fit) {}

double ModeEvaluator::point(Predictor k, int subject, double t) const {
  return eval_predictor(fit_->state, k, subject, t, true);
}

namespace {

double mode_eta_var(const ModeFit& fit, Predictor k, int subject, double t) {
  double var = 0.0;
  const auto& blocks = fit.state.blocks();
  for (int bi = 0; bi < static_cast<int>(blocks.size()); ++bi) {
    if (blocks[bi].term.predictor != k) continue;
    RowEval r = block_row(blocks[bi], fit.state.data(), subject, t, true);
    const Eigen::MatrixXd& cov = fit.blocks[bi].cov;
    var += r.vals.dot(cov.block(r.offset, r.offset, r.vals.size(), r.vals.size()) * r.vals);
  }
  return var;
}

}  // namespace

Band ModeEvaluator::band(Predictor k, int subject, double t) const {
  double eta = point(k, subject, t);
  double half = normal_q975 * std::sqrt(std::max(mode_eta_var(*fit_, k, subject, t), 0.0));
  return {eta - half, eta + half};
}

double ModeEvaluator::point_lg(int subject, double t) const {
  return point(Predictor::lambda, subject, t) + point(Predictor::gamma, subject, t);
}

Band ModeEvaluator::band_lg(int subject, double t) const {
  double eta = point_lg(subject, t);
  double var = mode_eta_var(*fit_, Predictor::lambda, subject, t) +
               mode_eta_var(*fit_, Predictor::gamma, subject, t);
  double half = normal_q975 * std::sqrt(std::max(var, 0.0));
  return {eta - half, eta + half};
}

MeanEvaluator::MeanEvaluator(const ModelState& state, const PosteriorSamples& samples)
    : state_(&state), samples_(&samples) {
  if (samples.kept() == 0) throw std::invalid_argument("MeanEvaluator: no kept samples");
  if (static_cast<int>(samples.blocks.size()) != static_cast<int>(state.blocks().size()))
    throw std::invalid_argument("MeanEvaluator: samples do not match the model");
}

Eigen::VectorXd MeanEvaluator::eta_draws(Predictor k, int subject, double t) const {
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(samples_->kept());
  const auto& blocks = state_->blocks();
  for (int bi = 0; bi < static_cast<int>(blocks.size()); ++bi) {
    if (blocks[bi].term.predictor != k) continue;
    RowEval r = block_row(blocks[bi], state_->data(), subject, t, true);
    eta += samples_->blocks[bi].beta.middleCols(r.offset, r.vals.size()) * r.vals;
  }
  return eta;
}

double MeanEvaluator::point(Predictor k, int subject, double t) const {
  return eta_draws(k, subject, t).mean();
}

Band MeanEvaluator::band(Predictor k, int subject, double t) const {
  Eigen::VectorXd eta = eta_draws(k, subject, t);
  return {quantile(eta, 0.025), quantile(eta, 0.975)};
}

double MeanEvaluator::point_lg(int subject, double t) const {
  Eigen::VectorXd eta =
      eta_draws(Predictor::lambda, subject, t) + eta_draws(Predictor::gamma, subject, t);
  return eta.mean();
}

Band MeanEvaluator::band_lg(int subject, double t) const {
  Eigen::VectorXd eta =
      eta_draws(Predictor::lambda, subject, t) + eta_draws(Predictor::gamma, subject, t);
  return {quantile(eta, 0.025), quantile(eta, 0.975)};
}

ReplicateMetrics longitudinal_metrics(const FitEvaluator& fit, const JointData& data,
                                      const SimTruth& truth) {
  if (data.n() != truth.setting.n)
    throw std::invalid_argument("metrics: truth and data subject counts differ");
  ReplicateMetrics out;
  const Eigen::VectorXd& grid = truth.setting.grid;
  for (Predictor k : {Predictor::mu, Predictor::sigma}) {
    CellAccum overall;
    for (int j = 0; j < data.N(); ++j) {
      int i = data.subj[j];
      double t = data.t_long(j);
      overall.add(fit.point(k, i, t), truth.eta(k, i, t), fit.band(k, i, t));
    }
    out.overall[k] = overall.stats();

    std::vector<TimeCell> per_time;
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      CellAccum cell;
      for (int i = 0; i < data.n(); ++i)
        cell.add(fit.point(k, i, grid(g)), truth.eta(k, i, grid(g)), fit.band(k, i, grid(g)));
      per_time.push_back({grid(g), cell.stats()});
    }
    out.per_time[k] = std::move(per_time);
  }
  return out;
}

ReplicateMetrics survival_metrics(const FitEvaluator& fit, const JointData& data,
                                  const SimTruth& truth, const Eigen::VectorXd& grid) {
  if (data.n() != truth.setting.n)
    throw std::invalid_argument("metrics: truth and data subject counts differ");
  ReplicateMetrics out;
  for (Predictor k : {Predictor::lambda, Predictor::gamma, Predictor::alpha}) {
    CellAccum overall;
    for (int i = 0; i < data.n(); ++i) {
      double t = data.T(i);
      overall.add(fit.point(k, i, t), truth.eta(k, i, t), fit.band(k, i, t));
    }
    out.overall[k] = overall.stats();

    if (k == Predictor::gamma) continue;  // time constant, no per-time view
    std::vector<TimeCell> per_time;
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
      CellAccum cell;
      for (int i = 0; i < data.n(); ++i)
        cell.add(fit.point(k, i, grid(g)), truth.eta(k, i, grid(g)), fit.band(k, i, grid(g)));
      per_time.push_back({grid(g), cell.stats()});
    }
    out.per_time[k] = std::move(per_time);
  }

  CellAccum lg;
  for (int i = 0; i < data.n(); ++i) {
    double t = data.T(i);
    double tr = truth.eta(Predictor::lambda, i, t) + truth.eta(Predictor::gamma, i, t);
    lg.add(fit.point_lg(i, t), tr, fit.band_lg(i, t));
  }
  out.lambda_plus_gamma = lg.stats();
  return out;
}

ReplicateMetrics replicate_metrics(const FitEvaluator& fit, const JointData& data,
                                   const SimTruth& truth, const Eigen::VectorXd& grid) {
  ReplicateMetrics lng = longitudinal_metrics(fit, data, truth);
  ReplicateMetrics srv = survival_metrics(fit, data, truth, grid);
  for (auto& [k, v] : srv.overall) lng.overall[k] = v;
  for (auto& [k, v] : srv.per_time) lng.per_time[k] = std::move(v);
  lng.lambda_plus_gamma = srv.lambda_plus_gamma;
  return lng;
}

namespace {

CellStats average(const std::vector<CellStats>& cells) {
  CellStats out;
  for (const CellStats& c : cells) {
    out.bias += c.bias;
    out.mse += c.mse;
    out.coverage += c.coverage;
    out.cells += c.cells;
  }
  double q = static_cast<double>(cells.size());
  out.bias /= q;
  out.mse /= q;
  out.coverage /= q;
  return out;
}

}  // namespace

MetricsReport aggregate(const std::vector<ReplicateMetrics>& reps) {
  if (reps.empty()) throw std::invalid_argument("aggregate: no replicates");
  for (const ReplicateMetrics& r : reps)
    if (r.overall.size() != reps.front().overall.size() ||
        r.per_time.size() != reps.front().per_time.size())
      throw std::invalid_argument("aggregate: predictors differ");
  MetricsReport out;
  out.replicates = static_cast<int>(reps.size());

  for (const auto& [k, first] : reps.front().overall) {
    std::vector<CellStats> cells;
    for (const ReplicateMetrics& r : reps) {
      auto it = r.overall.find(k);
      if (it == r.overall.end()) throw std::invalid_argument("aggregate: predictors differ");
      cells.push_back(it->second);
    }
    out.mean.overall[k] = average(cells);
  }

  for (const auto& [k, first] : reps.front().per_time) {
    std::vector<TimeCell> acc;
    for (std::size_t g = 0; g < first.size(); ++g) {
      std::vector<CellStats> cells;
      for (const ReplicateMetrics& r : reps) {
        auto it = r.per_time.find(k);
        if (it == r.per_time.end() || it->second.size() != first.size() ||
            it->second[g].time != first[g].time)
          throw std::invalid_argument("aggregate: time grids differ");
        cells.push_back(it->second[g].stats);
      }
      acc.push_back({first[g].time, average(cells)});
    }
    out.mean.per_time[k] = std::move(acc);
  }

  std::vector<CellStats> lg;
  for (const ReplicateMetrics& r : reps) lg.push_back(r.lambda_plus_gamma);
  out.mean.lambda_plus_gamma = average(lg);
  return out;
}

}  // namespace ajm
