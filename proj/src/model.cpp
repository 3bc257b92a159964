#include "ajm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace ajm {

const char* predictor_name(Predictor k) {
  switch (k) {
    case Predictor::lambda: return "lambda";
    case Predictor::gamma: return "gamma";
    case Predictor::alpha: return "alpha";
    case Predictor::mu: return "mu";
    case Predictor::sigma: return "sigma";
  }
  return "?";
}

Predictor predictor_from_name(const std::string& name) {
  for (Predictor k : all_predictors)
    if (name == predictor_name(k)) return k;
  throw std::invalid_argument("unknown predictor '" + name + "'");
}

const char* term_kind_name(TermKind kind) {
  switch (kind) {
    case TermKind::intercept: return "1";
    case TermKind::linear: return "lin";
    case TermKind::smooth: return "s";
    case TermKind::smooth_time: return "s";
    case TermKind::random_intercept: return "ri";
    case TermKind::functional_random_intercept: return "fri";
  }
  return "?";
}

std::string TermSpec::label() const {
  std::ostringstream out;
  out << predictor_name(predictor) << ":";
  switch (kind) {
    case TermKind::intercept: out << "1"; break;
    case TermKind::linear: out << "lin(" << covariate << ")"; break;
    case TermKind::smooth: out << "s(" << covariate << ",k=" << n_knots << ")"; break;
    case TermKind::smooth_time: out << "s(time,k=" << n_knots << ")"; break;
    case TermKind::random_intercept: out << "ri(" << covariate << ")"; break;
    case TermKind::functional_random_intercept:
      out << "fri(" << covariate << ",time,k=" << n_knots << ")";
      break;
  }
  return out.str();
}

std::vector<TermSpec> ModelSpec::terms_for(Predictor k) const {
  std::vector<TermSpec> out;
  for (const auto& t : terms)
    if (t.predictor == k) out.push_back(t);
  return out;
}

int JointData::subject_index(const std::string& id) const {
  for (int i = 0; i < n(); ++i)
    if (ids[i] == id) return i;
  return -1;
}

const Eigen::VectorXd& JointData::covariate(const std::string& name) const {
  auto it = covariates.find(name);
  if (it == covariates.end())
    throw ValidationError("unknown covariate '" + name + "'");
  return it->second;
}

void JointData::finalize() {
  int nn = n();
  if (T.size() != nn || event.size() != nn)
    throw ValidationError("survival vectors do not match the number of subjects");
  std::set<std::string> seen;
  for (int i = 0; i < nn; ++i) {
    if (ids[i].empty()) throw ValidationError("empty subject id");
    if (!seen.insert(ids[i]).second)
      throw ValidationError("duplicate subject id '" + ids[i] + "'");
    if (!(T(i) >= 0.0)) throw ValidationError("negative follow-up time for '" + ids[i] + "'");
    if (event(i) != 0 && event(i) != 1)
      throw ValidationError("event indicator for '" + ids[i] + "' must be 0 or 1");
  }
  for (const auto& [name, vals] : covariates)
    if (vals.size() != nn)
      throw ValidationError("covariate '" + name + "' has wrong length");

  int NN = N();
  if (static_cast<int>(subj.size()) != NN || t_long.size() != NN)
    throw ValidationError("longitudinal vectors have inconsistent lengths");
  for (int r = 0; r < NN; ++r) {
    if (subj[r] < 0 || subj[r] >= nn)
      throw ValidationError("longitudinal record " + std::to_string(r + 1) +
                            " refers to an unknown subject");
    if (!(t_long(r) >= 0.0))
      throw ValidationError("negative time in longitudinal record " + std::to_string(r + 1));
    if (t_long(r) > T(subj[r]))
      throw ValidationError("longitudinal record " + std::to_string(r + 1) +
                            " is after the follow-up time of '" + ids[subj[r]] + "'");
  }

  // canonical record order: by subject, then time (stable)
  std::vector<int> order(NN);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (subj[a] != subj[b]) return subj[a] < subj[b];
    return t_long(a) < t_long(b);
  });
  std::vector<int> subj2(NN);
  Eigen::VectorXd t2(NN), y2(NN);
  for (int r = 0; r < NN; ++r) {
    subj2[r] = subj[order[r]];
    t2(r) = t_long(order[r]);
    y2(r) = y(order[r]);
  }
  subj = std::move(subj2);
  t_long = std::move(t2);
  y = std::move(y2);

  std::vector<int> counts(nn, 0);
  for (int r = 0; r < NN; ++r) ++counts[subj[r]];
  empty_subjects.clear();
  for (int i = 0; i < nn; ++i)
    if (counts[i] == 0) empty_subjects.push_back(i);
}

QuadratureGrid QuadratureGrid::build(const Eigen::VectorXd& T, int points) {
  if (points < 2) throw std::invalid_argument("quadrature needs at least 2 points");
  QuadratureGrid g;
  int n = static_cast<int>(T.size());
  g.nodes.resize(n, points);
  g.weights.resize(n, points);
  for (int i = 0; i < n; ++i) {
    double h = T(i) / double(points - 1);
    for (int q = 0; q < points; ++q) {
      // the endpoint must be T(i) exactly: T*q/(points-1) can round one ulp
      // past it, which is outside the time bases spanning [0, max T]
      g.nodes(i, q) = q == points - 1 ? T(i) : T(i) * double(q) / double(points - 1);
      g.weights(i, q) = (q == 0 || q == points - 1) ? h / 2.0 : h;
    }
  }
  return g;
}

Eigen::VectorXd Design::apply(const Eigen::VectorXd& beta) const {
  Eigen::VectorXd out(rows());
  int w = width();
  for (int i = 0; i < rows(); ++i)
    out(i) = vals.row(i).dot(beta.segment(offset(i), w));
  return out;
}

void Design::add_scaled_rows(const Eigen::VectorXd& c, Eigen::VectorXd& out) const {
  int w = width();
  for (int i = 0; i < rows(); ++i)
    out.segment(offset(i), w) += c(i) * vals.row(i).transpose();
}

void Design::add_weighted_gram(const Eigen::VectorXd& w, Eigen::MatrixXd& H) const {
  int wd = width();
  for (int i = 0; i < rows(); ++i)
    H.block(offset(i), offset(i), wd, wd) +=
        w(i) * (vals.row(i).transpose() * vals.row(i));
}

Eigen::VectorXd Design::colwise_sum() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  int w = width();
  for (int i = 0; i < rows(); ++i)
    out.segment(offset(i), w) += vals.row(i).transpose();
  return out;
}

namespace {

constexpr double vague_precision = 1e-6;  // N(0, 1000^2) coefficient prior
constexpr double rank_rel_tol = 1e-10;

Eigen::VectorXd clamped_eigenvalues(const Eigen::MatrixXd& K) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  return es.eigenvalues().cwiseMax(0.0);
}

}  // namespace

void DesignBlock::set_tau2(int which, double value) {
  if (which < 0 || which >= static_cast<int>(tau2.size()))
    throw std::invalid_argument("set_tau2: no such variance parameter");
  if (!(value > 0.0)) throw std::domain_error("set_tau2: variance must be positive");
  tau2[which] = value;
  refresh_prior();
}

void DesignBlock::refresh_prior() {
  if (!penalized()) {
    P = vague_precision * Eigen::MatrixXd::Identity(p, p);
    prior_rank = p;
    log_pdet_P = p * std::log(vague_precision);
    return;
  }
  if (penalty.kind == PenaltyDef::Kind::anisotropic) {
    int ns = static_cast<int>(penalty.marg_s.rows());
    int nt = static_cast<int>(penalty.marg_t.rows());
    if (aniso_s_eig.size() == 0) {
      aniso_s_eig = clamped_eigenvalues(penalty.marg_s);
      aniso_t_eig = clamped_eigenvalues(penalty.marg_t);
    }
    P = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < ns; ++i) {
      for (int j = 0; j < ns; ++j) {
        double ks = penalty.marg_s(i, j);
        if (ks != 0.0)
          P.block(i * nt, j * nt, nt, nt).diagonal().array() += ks / tau2[0];
        if (i == j) P.block(i * nt, i * nt, nt, nt) += penalty.marg_t / tau2[1];
      }
    }
    double tol_s = aniso_s_eig.size() ? rank_rel_tol * aniso_s_eig.maxCoeff() : 0.0;
    double tol_t = aniso_t_eig.size() ? rank_rel_tol * aniso_t_eig.maxCoeff() : 0.0;
    prior_rank = 0;
    log_pdet_P = 0.0;
    for (int a = 0; a < ns; ++a) {
      for (int b = 0; b < nt; ++b) {
        bool pos_s = aniso_s_eig(a) > tol_s;
        bool pos_t = aniso_t_eig(b) > tol_t;
        if (!pos_s && !pos_t) continue;
        double s = pos_s ? aniso_s_eig(a) : 0.0;
        double t = pos_t ? aniso_t_eig(b) : 0.0;
        log_pdet_P += std::log(s / tau2[0] + t / tau2[1]);
        ++prior_rank;
      }
    }
    return;
  }
  // isotropic
  if (iso_eigvals.size() == 0) {
    iso_eigvals = clamped_eigenvalues(penalty.K);
    double tol = iso_eigvals.size() ? rank_rel_tol * iso_eigvals.maxCoeff() : 0.0;
    iso_log_pdet_K = 0.0;
    prior_rank = 0;
    for (Eigen::Index j = 0; j < iso_eigvals.size(); ++j) {
      if (iso_eigvals(j) > tol) {
        iso_log_pdet_K += std::log(iso_eigvals(j));
        ++prior_rank;
      }
    }
  } else {
    double tol = iso_eigvals.size() ? rank_rel_tol * iso_eigvals.maxCoeff() : 0.0;
    prior_rank = 0;
    for (Eigen::Index j = 0; j < iso_eigvals.size(); ++j)
      if (iso_eigvals(j) > tol) ++prior_rank;
  }
  P = penalty.K / tau2[0];
  log_pdet_P = iso_log_pdet_K - prior_rank * std::log(tau2[0]);
}

double DesignBlock::penalty_quad_form(int which) const {
  if (penalty.kind != PenaltyDef::Kind::anisotropic) {
    return beta.dot(penalty.K * beta);
  }
  int ns = static_cast<int>(penalty.marg_s.rows());
  int nt = static_cast<int>(penalty.marg_t.rows());
  double out = 0.0;
  if (which == 0) {  // K_s (x) I
    for (int i = 0; i < ns; ++i) {
      for (int j = 0; j < ns; ++j) {
        double ks = penalty.marg_s(i, j);
        if (ks != 0.0)
          out += ks * beta.segment(i * nt, nt).dot(beta.segment(j * nt, nt));
      }
    }
  } else {  // I (x) K_t
    for (int i = 0; i < ns; ++i)
      out += beta.segment(i * nt, nt).dot(penalty.marg_t * beta.segment(i * nt, nt));
  }
  return out;
}

int DesignBlock::penalty_rank(int which) const {
  if (penalty.kind != PenaltyDef::Kind::anisotropic) {
    Eigen::VectorXd ev = iso_eigvals.size() ? iso_eigvals : clamped_eigenvalues(penalty.K);
    double tol = ev.size() ? rank_rel_tol * ev.maxCoeff() : 0.0;
    int r = 0;
    for (Eigen::Index j = 0; j < ev.size(); ++j)
      if (ev(j) > tol) ++r;
    return r;
  }
  Eigen::VectorXd ev = which == 0 ? aniso_s_eig : aniso_t_eig;
  if (ev.size() == 0)
    ev = clamped_eigenvalues(which == 0 ? penalty.marg_s : penalty.marg_t);
  double tol = ev.size() ? rank_rel_tol * ev.maxCoeff() : 0.0;
  int r = 0;
  for (Eigen::Index j = 0; j < ev.size(); ++j)
    if (ev(j) > tol) ++r;
  int other = which == 0 ? static_cast<int>(penalty.marg_t.rows())
                         : static_cast<int>(penalty.marg_s.rows());
  return r * other;  // rank of the Kronecker expansion
}

namespace {

bool time_varying_kind(const TermSpec& t) {
  return t.kind == TermKind::smooth_time ||
         t.kind == TermKind::functional_random_intercept ||
         (t.kind == TermKind::linear && t.covariate == "time");
}

bool uses_long(Predictor k) { return k == Predictor::mu || k == Predictor::sigma; }
bool uses_surv(Predictor k) { return k != Predictor::sigma; }
bool uses_quad(Predictor k) {
  return k == Predictor::lambda || k == Predictor::alpha || k == Predictor::mu;
}

constexpr int constraint_grid_points = 201;

}  // namespace

RowEval block_row(const DesignBlock& block, const JointData& data, int subject, double time,
                  bool clamp, int* n_clamped) {
  RowEval out;
  const TermSpec& t = block.term;
  switch (t.kind) {
    case TermKind::intercept:
      out.vals = Eigen::VectorXd::Ones(1);
      break;
    case TermKind::linear:
      out.vals.resize(1);
      out.vals(0) = (t.covariate == "time") ? time : data.covariate(t.covariate)(subject);
      break;
    case TermKind::smooth: {
      Eigen::VectorXd row =
          bspline_row(block.basis, data.covariate(t.covariate)(subject), clamp, n_clamped);
      out.vals = block.ctrans.applied() ? (block.ctrans.Z.transpose() * row).eval() : row;
      break;
    }
    case TermKind::smooth_time: {
      Eigen::VectorXd row = bspline_row(block.basis, time, clamp, n_clamped);
      out.vals = block.ctrans.applied() ? (block.ctrans.Z.transpose() * row).eval() : row;
      break;
    }
    case TermKind::random_intercept:
      out.vals = Eigen::VectorXd::Ones(1);
      out.offset = subject;
      break;
    case TermKind::functional_random_intercept: {
      Eigen::VectorXd row = bspline_row(block.basis, time, clamp, n_clamped);
      out.vals = block.ctrans.Z.transpose() * row;
      out.offset = subject * static_cast<int>(out.vals.size());
      break;
    }
  }
  return out;
}

namespace {

DesignBlock make_block(const TermSpec& term, const JointData& data, const QuadratureGrid& quad) {
  DesignBlock b;
  b.term = term;
  Predictor k = term.predictor;
  int n = data.n();
  double t_hi = data.T.size() ? data.T.maxCoeff() : 0.0;
  if (!(t_hi > 0.0)) t_hi = 1.0;

  switch (term.kind) {
    case TermKind::intercept:
      b.p = 1;
      b.penalty = zero_penalty(1);
      break;
    case TermKind::linear:
      if (term.covariate != "time") data.covariate(term.covariate);  // existence check
      b.p = 1;
      b.penalty = zero_penalty(1);
      break;
    case TermKind::smooth: {
      const Eigen::VectorXd& z = data.covariate(term.covariate);
      double lo = z.minCoeff(), hi = z.maxCoeff();
      if (!(hi > lo))
        throw ValidationError("covariate '" + term.covariate + "' is constant; cannot smooth");
      b.basis = SplineBasisDef::equidistant(lo, hi, term.n_knots, term.degree);
      PenaltyDef pen = difference_penalty(b.basis.n_basis(), term.diff_order);
      if (term.constrained) {
        auto stz = sum_to_zero(bspline_design(b.basis, z), pen);
        b.ctrans = stz.transform;
        b.penalty = stz.penalty;
      } else {
        b.penalty = pen;
      }
      b.p = b.penalty.dim();
      b.tau2 = {10.0};
      break;
    }
    case TermKind::smooth_time: {
      b.basis = SplineBasisDef::equidistant(0.0, t_hi, term.n_knots, term.degree);
      PenaltyDef pen = difference_penalty(b.basis.n_basis(), term.diff_order);
      if (term.constrained) {
        Eigen::VectorXd ref =
            Eigen::VectorXd::LinSpaced(constraint_grid_points, 0.0, t_hi);
        auto stz = sum_to_zero(bspline_design(b.basis, ref), pen);
        b.ctrans = stz.transform;
        b.penalty = stz.penalty;
      } else {
        b.penalty = pen;
      }
      b.p = b.penalty.dim();
      b.tau2 = {10.0};
      break;
    }
    case TermKind::random_intercept: {
      if (term.covariate != "id")
        throw ValidationError("random intercepts are grouped by 'id'");
      if (n < 2) throw ValidationError("random intercept needs more than one subject");
      b.p = n;
      b.penalty = identity_penalty(n);
      b.tau2 = {10.0};
      break;
    }
    case TermKind::functional_random_intercept: {
      if (term.covariate != "id")
        throw ValidationError("functional random intercepts are grouped by 'id'");
      if (n < 2)
        throw ValidationError("functional random intercept needs more than one subject");
      b.basis = SplineBasisDef::equidistant(0.0, t_hi, term.n_knots, term.degree);
      PenaltyDef pen = difference_penalty(b.basis.n_basis(), term.diff_order);
      Eigen::VectorXd ref = Eigen::VectorXd::LinSpaced(constraint_grid_points, 0.0, t_hi);
      auto stz = sum_to_zero(bspline_design(b.basis, ref), pen);
      b.ctrans = stz.transform;
      int dt = static_cast<int>(stz.X.cols());
      b.penalty.kind = PenaltyDef::Kind::anisotropic;
      b.penalty.order = term.diff_order;
      b.penalty.marg_s = Eigen::MatrixXd::Identity(n, n);
      b.penalty.marg_t = stz.penalty.K;
      b.p = n * dt;
      b.tau2 = {10.0, 10.0};
      break;
    }
  }

  b.beta = Eigen::VectorXd::Zero(b.p);

  int width = b.p;
  bool banded = term.kind == TermKind::random_intercept ||
                term.kind == TermKind::functional_random_intercept;
  if (banded)
    width = term.kind == TermKind::random_intercept ? 1 : b.p / n;

  auto fill = [&](Design& D, int rows, auto subject_of, auto time_of) {
    D.p = b.p;
    D.vals.resize(rows, width);
    if (banded) D.offsets.resize(rows);
    for (int r = 0; r < rows; ++r) {
      RowEval re = block_row(b, data, subject_of(r), time_of(r));
      D.vals.row(r) = re.vals.transpose();
      if (banded) D.offsets[r] = re.offset;
    }
  };

  if (uses_long(k))
    fill(b.X_long, data.N(), [&](int r) { return data.subj[r]; },
         [&](int r) { return data.t_long(r); });
  if (uses_surv(k))
    fill(b.X_surv, n, [](int i) { return i; }, [&](int i) { return data.T(i); });
  if (uses_quad(k)) {
    b.X_quad.resize(n);
    b.quad_offset.assign(n, 0);
    int Q = quad.Q();
    for (int i = 0; i < n; ++i) {
      b.X_quad[i].resize(Q, width);
      for (int q = 0; q < Q; ++q) {
        RowEval re = block_row(b, data, i, quad.nodes(i, q));
        b.X_quad[i].row(q) = re.vals.transpose();
        b.quad_offset[i] = re.offset;
      }
    }
  }

  b.refresh_prior();
  return b;
}

}  // namespace

ModelState ModelState::build(const ModelSpec& spec, const JointData& data, int quad_points) {
  ModelState st;
  st.data_ = &data;
  st.spec_ = spec;
  st.quad_ = QuadratureGrid::build(data.T, quad_points);

  for (const auto& term : spec.terms) {
    if (time_varying_kind(term) && term.predictor != Predictor::lambda &&
        term.predictor != Predictor::alpha && term.predictor != Predictor::mu)
      throw ValidationError("time-varying terms are only allowed in lambda, alpha and mu (" +
                            term.label() + ")");
  }

  for (Predictor k : all_predictors)
    for (const auto& term : spec.terms)
      if (term.predictor == k) {
        st.by_predictor_[static_cast<int>(k)].push_back(static_cast<int>(st.blocks_.size()));
        st.blocks_.push_back(make_block(term, data, st.quad_));
      }

  // moment-matched intercept starts for the longitudinal submodel
  if (data.N() > 0) {
    double mean_y = data.y.mean();
    double sd_y = data.N() > 1
                      ? std::sqrt((data.y.array() - mean_y).square().sum() / (data.N() - 1))
                      : 0.0;
    for (auto& b : st.blocks_) {
      if (b.term.kind != TermKind::intercept) continue;
      if (b.term.predictor == Predictor::mu) b.beta(0) = mean_y;
      if (b.term.predictor == Predictor::sigma && sd_y > 0.0) b.beta(0) = std::log(sd_y);
    }
  }

  st.refresh_all();
  return st;
}

const std::vector<int>& ModelState::blocks_of(Predictor k) const {
  return by_predictor_[static_cast<int>(k)];
}

const PredictorCache& ModelState::cache(Predictor k) const {
  return cache_[static_cast<int>(k)];
}

void ModelState::refresh(Predictor k) {
  PredictorCache& c = cache_[static_cast<int>(k)];
  const JointData& d = *data_;
  int n = d.n();
  if (uses_long(k)) c.at_long = Eigen::VectorXd::Zero(d.N());
  if (uses_surv(k)) c.at_surv = Eigen::VectorXd::Zero(n);
  if (uses_quad(k)) c.at_quad = Eigen::MatrixXd::Zero(n, quad_.Q());
  for (int bi : blocks_of(k)) {
    const DesignBlock& b = blocks_[bi];
    if (uses_long(k)) c.at_long += b.X_long.apply(b.beta);
    if (uses_surv(k)) c.at_surv += b.X_surv.apply(b.beta);
    if (uses_quad(k)) {
      int w = static_cast<int>(b.X_quad.empty() ? 0 : b.X_quad[0].cols());
      for (int i = 0; i < n; ++i)
        c.at_quad.row(i) +=
            (b.X_quad[i] * b.beta.segment(b.quad_offset[i], w)).transpose();
    }
  }
}

void ModelState::refresh_all() {
  for (Predictor k : all_predictors) refresh(k);
}

void ModelState::set_beta(int block, const Eigen::VectorXd& beta) {
  if (beta.size() != blocks_[block].beta.size())
    throw std::invalid_argument("set_beta: dimension mismatch");
  blocks_[block].beta = beta;
  refresh(blocks_[block].term.predictor);
}

Eigen::VectorXd ModelState::rinv() const {
  const Eigen::VectorXd& eta = cache(Predictor::sigma).at_long;
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index r = 0; r < eta.size(); ++r) {
    double e = -2.0 * eta(r);
    if (e > 700.0) {
      e = 700.0;
      note_overflow();
    }
    out(r) = std::exp(e);
  }
  return out;
}

double eval_predictor(const ModelState& state, Predictor k, int subject, double time,
                      bool clamp) {
  double out = 0.0;
  for (int bi : state.blocks_of(k)) {
    const DesignBlock& b = state.blocks()[bi];
    RowEval re = block_row(b, state.data(), subject, time, clamp);
    out += re.vals.dot(b.beta.segment(re.offset, re.vals.size()));
  }
  return out;
}

}  // namespace ajm
