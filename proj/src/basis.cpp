#include "ajm/basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ajm {

bool operator==(const SplineBasisDef& a, const SplineBasisDef& b) {
  return a.degree == b.degree && a.knots.size() == b.knots.size() && a.knots == b.knots;
}

SplineBasisDef SplineBasisDef::equidistant(double lo, double hi, int n_knots, int degree) {
  if (degree < 0) throw std::invalid_argument("spline degree must be nonnegative");
  if (!(hi > lo)) throw std::invalid_argument("knot range must have positive width");
  int interior = n_knots - 2 * (degree + 1);
  if (interior < 0)
    throw std::invalid_argument("need at least " + std::to_string(2 * (degree + 1)) +
                                " knots for degree " + std::to_string(degree));
  SplineBasisDef def;
  def.degree = degree;
  def.knots.resize(n_knots);
  int pos = 0;
  for (int j = 0; j <= degree; ++j) def.knots(pos++) = lo;
  for (int j = 1; j <= interior; ++j)
    def.knots(pos++) = lo + (hi - lo) * double(j) / double(interior + 1);
  for (int j = 0; j <= degree; ++j) def.knots(pos++) = hi;
  return def;
}

namespace {

// index k with knots[k] <= x < knots[k+1], restricted to the valid span range
int find_span(const SplineBasisDef& def, double x) {
  int d = def.degree;
  int last = static_cast<int>(def.knots.size()) - d - 2;  // last valid span
  if (x >= def.hi()) return last;
  const double* begin = def.knots.data();
  const double* end = begin + def.knots.size();
  int k = static_cast<int>(std::upper_bound(begin, end, x) - begin) - 1;
  return std::clamp(k, d, last);
}

// values of the degree+1 basis functions supported on the span (de Boor)
void span_values(const SplineBasisDef& def, int span, double x, double* out) {
  int d = def.degree;
  const Eigen::VectorXd& kn = def.knots;
  out[0] = 1.0;
  std::array<double, 32> left{}, right{};
  for (int j = 1; j <= d; ++j) {
    left[j] = x - kn(span + 1 - j);
    right[j] = kn(span + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double den = right[r + 1] + left[j - r];
      double tmp = den != 0.0 ? out[r] / den : 0.0;
      out[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out[j] = saved;
  }
}

}  // namespace

Eigen::VectorXd bspline_row(const SplineBasisDef& def, double t, bool clamp, int* n_clamped) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(def.n_basis());
  double x = t;
  if (x < def.lo() || x > def.hi()) {
    if (!clamp) {
      std::ostringstream msg;
      msg << "point " << x << " outside basis range [" << def.lo() << ", " << def.hi() << "]";
      throw std::out_of_range(msg.str());
    }
    x = std::clamp(x, def.lo(), def.hi());
    if (n_clamped) ++*n_clamped;
  }
  int span = find_span(def, x);
  std::array<double, 32> vals{};
  if (def.degree + 1 > static_cast<int>(vals.size()))
    throw std::invalid_argument("spline degree too large");
  span_values(def, span, x, vals.data());
  for (int j = 0; j <= def.degree; ++j) row(span - def.degree + j) = vals[j];
  return row;
}

Eigen::MatrixXd bspline_design(const SplineBasisDef& def, const Eigen::VectorXd& t, bool clamp,
                               int* n_clamped) {
  Eigen::MatrixXd X(t.size(), def.n_basis());
  for (Eigen::Index i = 0; i < t.size(); ++i)
    X.row(i) = bspline_row(def, t(i), clamp, n_clamped).transpose();
  return X;
}

Eigen::MatrixXd difference_matrix(int dim, int order) {
  if (dim <= 0) throw std::invalid_argument("difference_matrix: dim must be positive");
  if (order < 0 || order >= dim)
    throw std::invalid_argument("difference_matrix: need 0 <= order < dim");
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(dim, dim);
  for (int r = 0; r < order; ++r) {
    int rows = static_cast<int>(D.rows());
    Eigen::MatrixXd Dnext(rows - 1, dim);
    for (int i = 0; i + 1 < rows; ++i) Dnext.row(i) = D.row(i + 1) - D.row(i);
    D = Dnext;
  }
  return D;
}

int PenaltyDef::dim() const {
  if (kind == Kind::anisotropic)
    return static_cast<int>(marg_s.rows() * marg_t.rows());
  return static_cast<int>(K.rows());
}

PenaltyDef zero_penalty(int dim) {
  PenaltyDef p;
  p.kind = PenaltyDef::Kind::zero;
  p.K = Eigen::MatrixXd::Zero(dim, dim);
  return p;
}

PenaltyDef identity_penalty(int dim) {
  PenaltyDef p;
  p.kind = PenaltyDef::Kind::identity;
  p.K = Eigen::MatrixXd::Identity(dim, dim);
  return p;
}

PenaltyDef difference_penalty(int dim, int order) {
  PenaltyDef p;
  p.kind = PenaltyDef::Kind::difference;
  p.order = order;
  Eigen::MatrixXd D = difference_matrix(dim, order);
  p.K = D.transpose() * D;
  return p;
}

ConstraintTransform colsum_complement(const Eigen::VectorXd& colsums) {
  int d = static_cast<int>(colsums.size());
  if (d < 2) throw std::invalid_argument("sum-to-zero constraint needs at least 2 columns");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(colsums);
  Eigen::MatrixXd Q = qr.householderQ();
  ConstraintTransform ct;
  ct.Z = Q.rightCols(d - 1);
  return ct;
}

SumToZero sum_to_zero(const Eigen::MatrixXd& X, const PenaltyDef& penalty) {
  if (penalty.kind == PenaltyDef::Kind::anisotropic)
    throw std::invalid_argument("sum_to_zero: constrain marginals before tensoring");
  if (penalty.K.rows() != X.cols())
    throw std::invalid_argument("sum_to_zero: penalty and design dimensions differ");
  SumToZero out;
  out.transform = colsum_complement(X.colwise().sum());
  out.X = X * out.transform.Z;
  out.penalty = penalty;
  out.penalty.K = out.transform.Z.transpose() * penalty.K * out.transform.Z;
  // rank against the scale of the unconstrained design, so a constraint that
  // annihilates X entirely (all singular values ~eps) is still caught
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.X);
  double ref = std::max(X.norm(), 1e-300);
  int rank = static_cast<int>((svd.singularValues().array() > 1e-10 * ref).count());
  if (rank < out.X.cols()) {
    out.transform.warning = "constrained design is rank deficient (rank " +
                            std::to_string(rank) + " of " +
                            std::to_string(out.X.cols()) + ")";
  }
  return out;
}

Eigen::MatrixXd row_tensor(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != B.rows())
    throw std::invalid_argument("row_tensor: row counts differ");
  Eigen::MatrixXd out(A.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index a = 0; a < A.cols(); ++a)
      out.block(i, a * B.cols(), 1, B.cols()) = A(i, a) * B.row(i);
  return out;
}

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd out(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

Eigen::MatrixXd anisotropic_penalty(const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& K_t,
                                    double tau2_s, double tau2_t) {
  if (!(tau2_s > 0.0) || !(tau2_t > 0.0))
    throw std::domain_error("anisotropic_penalty: variances must be positive");
  Eigen::MatrixXd I_s = Eigen::MatrixXd::Identity(K_s.rows(), K_s.cols());
  Eigen::MatrixXd I_t = Eigen::MatrixXd::Identity(K_t.rows(), K_t.cols());
  return kronecker(K_s, I_t) / tau2_s + kronecker(I_s, K_t) / tau2_t;
}

}  // namespace ajm
