#include "ajm/simulate.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ajm/basis.hpp"

namespace ajm {

namespace {

void validate(const SimSetting& s) {
  if (s.n < 1) throw std::invalid_argument("simulate: need at least one subject");
  if (s.grid.size() < 2) throw std::invalid_argument("simulate: grid needs at least two points");
  if (s.grid(0) < 0.0) throw std::invalid_argument("simulate: grid starts before zero");
  for (Eigen::Index j = 1; j < s.grid.size(); ++j)
    if (!(s.grid(j) > s.grid(j - 1)))
      throw std::invalid_argument("simulate: grid must be strictly increasing");
  if (!(s.missing_frac >= 0.0 && s.missing_frac < 1.0))
    throw std::invalid_argument("simulate: missing fraction outside [0,1)");
  if (!(s.error_sd > 0.0)) throw std::invalid_argument("simulate: error sd must be positive");
  if (!(s.re_var >= 0.0)) throw std::invalid_argument("simulate: negative intercept variance");
  if (!(s.tau2_s > 0.0 && s.tau2_t > 0.0))
    throw std::invalid_argument("simulate: variance parameters must be positive");
  if (!s.f_mu_time || !s.f_mu_x2 || !s.f_gamma_x1 || !s.eta_lambda || !s.eta_alpha)
    throw std::invalid_argument("simulate: truth functions not set");
}

constexpr int constraint_grid_points = 201;

}  // namespace

SimSetting SimSetting::preset(const std::string& name, std::uint64_t seed) {
  SimSetting s;
  s.name = name;
  s.seed = seed;
  s.f_mu_time = [](double t) { return 0.1 * (t + 2.0) * std::exp(-0.075 * t); };
  s.f_mu_x2 = [](double x) { return 0.6 * std::sin(x); };
  s.f_gamma_x1 = [](double x) { return 0.5 * std::sin(x); };
  s.eta_lambda = [](double t) { return 1.4 * std::log((t + 10.0) / 1000.0); };
  auto alpha_const = [](double) { return 1.0; };
  auto alpha_a = [](double t) { return std::cos((t - 33.0) / 33.0); };
  auto alpha_b = [](double t) { return std::cos((t - 20.0) / 20.0); };

  if (name == "1a" || name == "2a") {
    s.n = 150;
    s.grid = Eigen::VectorXd::LinSpaced(121, 0.0, 120.0);
    s.missing_frac = 0.75;
    s.eta_alpha = name == "1a" ? std::function<double(double)>(alpha_const) : alpha_a;
  } else if (name == "1b" || name == "2b") {
    s.n = 300;
    s.grid = Eigen::VectorXd::LinSpaced(25, 0.0, 72.0);
    s.missing_frac = 0.10;
    s.eta_alpha = name == "1b" ? std::function<double(double)>(alpha_const) : alpha_b;
  } else if (name == "1a-mini" || name == "2a-mini") {
    s.n = 50;
    s.grid = Eigen::VectorXd::LinSpaced(31, 0.0, 60.0);
    s.missing_frac = 0.50;
    s.eta_alpha = name == "1a-mini" ? std::function<double(double)>(alpha_const) : alpha_a;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return s;
}

bool SimSetting::is_preset(const std::string& name) {
  return name == "1a" || name == "1b" || name == "2a" || name == "2b" || name == "1a-mini" ||
         name == "2a-mini";
}

double SimTruth::fri(int subject, double t) const {
  Eigen::VectorXd row = bspline_row(fri_basis, t, true);
  return row.dot(fri_Z * fri_coef.row(subject).transpose());
}

double SimTruth::eta_mu(int subject, double t) const {
  return setting.mu_intercept + setting.f_mu_time(t) + r(subject) + fri(subject, t) +
         setting.f_mu_x2(x2(subject));
}

double SimTruth::eta(Predictor k, int subject, double t) const {
  switch (k) {
    case Predictor::lambda: return setting.eta_lambda(t);
    case Predictor::gamma: return setting.f_gamma_x1(x1(subject));
    case Predictor::alpha: return setting.eta_alpha(t);
    case Predictor::mu: return eta_mu(subject, t);
    case Predictor::sigma: return std::log(setting.error_sd);
  }
  return 0.0;
}

double SimTruth::hazard(int subject, double t) const {
  return std::exp(setting.eta_lambda(t) + setting.f_gamma_x1(x1(subject)) +
                  setting.eta_alpha(t) * eta_mu(subject, t));
}

SimTruth draw_trajectories(const SimSetting& setting) {
  validate(setting);
  SimTruth truth;
  truth.setting = setting;

  double t_hi = setting.max_time();
  truth.fri_basis = SplineBasisDef::equidistant(0.0, t_hi, setting.fri_knots, setting.fri_degree);
  int D = truth.fri_basis.n_basis();
  PenaltyDef pen = difference_penalty(D, setting.fri_diff_order);
  Eigen::VectorXd ref = Eigen::VectorXd::LinSpaced(constraint_grid_points, 0.0, t_hi);
  auto stz = sum_to_zero(bspline_design(truth.fri_basis, ref), pen);
  truth.fri_Z = stz.transform.Z;
  int dt = static_cast<int>(truth.fri_Z.cols());

  // per-subject coefficient precision; the identity part keeps it invertible,
  // null directions of the difference part get zero variance anyway
  Eigen::MatrixXd M =
      Eigen::MatrixXd::Identity(dt, dt) / setting.tau2_s + stz.penalty.K / setting.tau2_t;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("simulate: eigen decomposition of the truth precision failed");
  double dmax = es.eigenvalues().maxCoeff();
  Eigen::VectorXd sd(dt);
  for (int k = 0; k < dt; ++k) {
    double d = es.eigenvalues()(k);
    if (d < -1e-10 * dmax) throw std::runtime_error("simulate: truth precision is indefinite");
    sd(k) = d > 1e-10 * dmax ? 1.0 / std::sqrt(d) : 0.0;
  }

  int n = setting.n;
  truth.x1.resize(n);
  truth.x2.resize(n);
  truth.r.resize(n);
  truth.fri_coef.resize(n, dt);
  Rng master(setting.seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = master.substream(2 * static_cast<std::uint64_t>(i));
    truth.x1(i) = rng.uniform(-3.0, 3.0);
    truth.x2(i) = rng.uniform(-3.0, 3.0);
    truth.r(i) = std::sqrt(setting.re_var) * rng.normal();
    Eigen::VectorXd z(dt);
    for (int k = 0; k < dt; ++k) z(k) = rng.normal();
    truth.fri_coef.row(i) = (es.eigenvectors() * sd.cwiseProduct(z)).transpose();
  }
  truth.event_time = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  truth.censor_time = Eigen::VectorXd::Zero(n);
  return truth;
}

std::pair<double, double> draw_survival_one(const SimSetting& setting, const SimTruth& truth,
                                            int subject, Rng& rng) {
  double t_max = setting.max_time();
  double target = -std::log(rng.uniform());
  double censor = rng.uniform(0.0, 1.5 * t_max);

  // cumulative hazard table on a fine grid, then bisection inside the
  // bracketing interval; trapezoid is exact for a constant hazard
  int nodes = fine_hazard_nodes;
  double h = t_max / static_cast<double>(nodes - 1);
  Eigen::VectorXd haz(nodes), cum(nodes);
  for (int j = 0; j < nodes; ++j) haz(j) = truth.hazard(subject, h * j);
  cum(0) = 0.0;
  for (int j = 1; j < nodes; ++j) cum(j) = cum(j - 1) + 0.5 * h * (haz(j - 1) + haz(j));

  double event = std::numeric_limits<double>::infinity();
  if (cum(nodes - 1) >= target) {
    int j = 1;
    while (cum(j) < target) ++j;
    auto lambda_at = [&](double t) {
      return cum(j - 1) + 0.5 * (t - h * (j - 1)) * (haz(j - 1) + truth.hazard(subject, t));
    };
    double lo = h * (j - 1), hi = h * j;
    while (hi - lo > bisect_tol) {
      double mid = 0.5 * (lo + hi);
      if (lambda_at(mid) < target)
        lo = mid;
      else
        hi = mid;
    }
    event = 0.5 * (lo + hi);
  }
  return {event, censor};
}

void draw_survival(const SimSetting& setting, SimTruth& truth) {
  Rng master(setting.seed);
  for (int i = 0; i < setting.n; ++i) {
    Rng rng = master.substream(2 * static_cast<std::uint64_t>(i) + 1);
    auto [event, censor] = draw_survival_one(setting, truth, i, rng);
    truth.event_time(i) = event;
    truth.censor_time(i) = censor;
  }
}

SimResult assemble_dataset(const SimSetting& setting) {
  SimResult out;
  out.truth = draw_trajectories(setting);
  draw_survival(setting, out.truth);
  const SimTruth& truth = out.truth;

  JointData& d = out.data;
  int n = setting.n;
  double t_max = setting.max_time();
  d.ids.resize(n);
  d.T.resize(n);
  d.event.resize(n);
  for (int i = 0; i < n; ++i) {
    d.ids[i] = "s" + std::to_string(i + 1);
    double censored = std::min(t_max, truth.censor_time(i));
    d.T(i) = std::min(truth.event_time(i), censored);
    d.event(i) = truth.event_time(i) < censored ? 1 : 0;
  }
  d.covariates["x1"] = truth.x1;
  d.covariates["x2"] = truth.x2;

  Rng master(setting.seed);
  Rng err_rng = master.substream(2 * static_cast<std::uint64_t>(n) + 1);
  std::vector<int> subj;
  std::vector<double> times, ys;
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < setting.grid.size(); ++j) {
      double t = setting.grid(j);
      if (t > d.T(i)) break;
      subj.push_back(i);
      times.push_back(t);
      ys.push_back(truth.eta_mu(i, t) + setting.error_sd * err_rng.normal());
    }
  }

  // remove an exact fraction of the records, uniformly without replacement
  int M = static_cast<int>(subj.size());
  int drop = static_cast<int>(std::llround(setting.missing_frac * M));
  std::vector<int> order(M);
  std::iota(order.begin(), order.end(), 0);
  Rng miss_rng = master.substream(2 * static_cast<std::uint64_t>(n));
  for (int j = 0; j < drop; ++j) {
    int pick = j + static_cast<int>(miss_rng.uniform() * (M - j));
    pick = std::min(pick, M - 1);
    std::swap(order[j], order[pick]);
  }
  std::vector<char> dropped(M, 0);
  for (int j = 0; j < drop; ++j) dropped[order[j]] = 1;

  int keep = M - drop;
  d.subj.reserve(keep);
  d.t_long.resize(keep);
  d.y.resize(keep);
  int at = 0;
  for (int j = 0; j < M; ++j) {
    if (dropped[j]) continue;
    d.subj.push_back(subj[j]);
    d.t_long(at) = times[j];
    d.y(at) = ys[j];
    ++at;
  }
  d.finalize();
  return out;
}

}  // namespace ajm
