#pragma once

#include <Eigen/Dense>
#include <string>

namespace ajm {

// Clamped B-spline basis: boundary knots replicated degree+1 times,
// n_basis = #knots - degree - 1.
struct SplineBasisDef {
  int degree = 3;
  Eigen::VectorXd knots;

  int n_basis() const { return static_cast<int>(knots.size()) - degree - 1; }
  double lo() const { return knots(degree); }
  double hi() const { return knots(knots.size() - degree - 1); }

  // n_knots total entries, equidistant interior knots strictly inside (lo, hi)
  static SplineBasisDef equidistant(double lo, double hi, int n_knots, int degree = 3);

  friend bool operator==(const SplineBasisDef&, const SplineBasisDef&);
};

// Cox-de Boor recursion. Throws std::out_of_range for points outside
// [lo, hi] unless clamp is set, in which case points are clamped and counted.
Eigen::MatrixXd bspline_design(const SplineBasisDef& def, const Eigen::VectorXd& t,
                               bool clamp = false, int* n_clamped = nullptr);
Eigen::VectorXd bspline_row(const SplineBasisDef& def, double t,
                            bool clamp = false, int* n_clamped = nullptr);

// r-th order forward difference matrix, (dim-r) x dim; order 0 gives identity
Eigen::MatrixXd difference_matrix(int dim, int order);

struct PenaltyDef {
  enum class Kind { zero, identity, difference, anisotropic };
  Kind kind = Kind::zero;
  int order = 0;                   // difference order where applicable
  Eigen::MatrixXd K;               // zero/identity/difference (possibly constrained)
  Eigen::MatrixXd marg_s, marg_t;  // anisotropic marginals (subject, time)

  int dim() const;
};

PenaltyDef zero_penalty(int dim);
PenaltyDef identity_penalty(int dim);
PenaltyDef difference_penalty(int dim, int order);

struct ConstraintTransform {
  Eigen::MatrixXd Z;    // D x (D-1), orthonormal columns, Z' c = 0
  std::string warning;  // set when the transformed design is rank deficient
  bool applied() const { return Z.size() > 0; }
};

// Z spanning the orthogonal complement of a column-sum vector (QR based)
ConstraintTransform colsum_complement(const Eigen::VectorXd& colsums);

// Sum-to-zero reparameterization: X_dot = X Z with 1' X_dot = 0,
// K_dot = Z' K Z. The annihilated direction is X's column-sum vector.
struct SumToZero {
  Eigen::MatrixXd X;
  PenaltyDef penalty;
  ConstraintTransform transform;
};
SumToZero sum_to_zero(const Eigen::MatrixXd& X, const PenaltyDef& penalty);

// row-wise tensor product: row i = kron(A.row(i), B.row(i)), A-major columns
Eigen::MatrixXd row_tensor(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// (1/tau2_s) K_s (x) I + (1/tau2_t) I (x) K_t
Eigen::MatrixXd anisotropic_penalty(const Eigen::MatrixXd& K_s, const Eigen::MatrixXd& K_t,
                                    double tau2_s, double tau2_t);

}  // namespace ajm
