#pragma once

#include "qlnet/common.hpp"
#include "qlnet/data.hpp"
#include "qlnet/model.hpp"

#include <vector>

namespace qlnet {

// --- symmetric eigendecomposition ---------------------------------------------

struct EigDecomp {
  /// Eigenvalues sorted in descending order.
  Vector eigenvalues;
  /// Orthonormal eigenvectors, column i pairs with eigenvalues(i).
  Matrix eigenvectors;
  /// Jacobi rotations applied.
  long rotations = 0;
};

struct EigOptions {
  /// Stop once the off-diagonal Frobenius mass is below tol * ||A||_F.
  double tol = 1e-12;
  /// Rotation budget is max_rotation_factor * d^2.
  long max_rotation_factor = 100;
};

/// Cyclic Jacobi eigensolver. The input is symmetrized first. Throws
/// NumericalError if the rotation budget is exhausted.
EigDecomp sym_eig(const Eigen::Ref<const Matrix>& A, const EigOptions& opts = {});

// --- feature lifts ---------------------------------------------------------------

/// Quadratic monomials x_i x_j (i <= j) in row-major upper-triangular order,
/// plus ||x||^2 at the end when include_norm is set.
Vector lift_quadratic(const Eigen::Ref<const Vector>& x, bool include_norm = false);

/// Coefficient vector c with c . lift_quadratic(x) = A . x x^T: diagonal
/// entries map to A_ii, off-diagonal entries to 2 A_ij.
Vector quadratic_coefficients(const Eigen::Ref<const Matrix>& A);
/// Inverse of quadratic_coefficients; returns the symmetric A.
Matrix quadratic_matrix(const Eigen::Ref<const Vector>& c, Eigen::Index d);

/// Homogeneous degree-p monomials prod_j x_{i_j}, one per multiset
/// i_1 <= ... <= i_p (same order as multisets(d, p)).
Vector lift_monomials(const Eigen::Ref<const Vector>& x, int p);

/// N x F feature matrix of the data for the given degree. Degree 2 accepts
/// pre-lifted samples (features X_n(i, j), trace for the norm feature).
Matrix feature_matrix(const Dataset& data, int degree, bool include_norm);

// --- least squares ------------------------------------------------------------------

struct LeastSquaresFit {
  /// F x M coefficients (minimum-norm when rank deficient).
  Matrix coefficients;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

/// min ||Phi C - Y||_F via complete orthogonal decomposition.
LeastSquaresFit least_squares(const Eigen::Ref<const Matrix>& Phi, const Eigen::Ref<const Matrix>& Y);

// --- convex oracle -------------------------------------------------------------------

struct OracleSolution {
  int degree = 2;
  bool include_norm = false;
  Eigen::Index input_dim = 0;
  /// Symmetric coefficient matrix per output (degree 2 only; the alpha part
  /// is kept separate in alpha_star).
  std::vector<Matrix> A;
  /// Norm-feature coefficient per output (zero when not included).
  Vector alpha_star;
  /// F x M monomial coefficients as fitted.
  Matrix coefficients;
  /// Optimal (1/(MN)) sum r^2.
  double loss_star = 0.0;
  /// sqrt(sum_m ||sum_n r_mn X_n||_F^2) at the optimum (degree 2 only).
  double residual_norm = 0.0;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

/// Global least-squares optimum over the lifted features of the given degree.
OracleSolution solve_oracle(const Dataset& data, int degree = 2, bool include_norm = false);

/// NMSE of the oracle fit: loss_star * M N / sum y^2.
double oracle_nmse(const OracleSolution& sol, const Dataset& data);

/// Degree-2 oracle followed by an eigendecomposition of each A_m. For a
/// single output the layer is (lambda = sigma, Q = P, alpha = alpha*); for M
/// outputs Q = [P_1 ... P_M] with block-supported rows of W. Extra columns
/// beyond the minimal width are zero with zero weights. `k` = 0 selects the
/// minimal width M d.
QLLayer closed_form_solver(const Dataset& data, bool include_norm = false, Eigen::Index k = 0);

/// Least squares over the second-layer weights with Q fixed; features
/// (q_j^T x_n)^2. Returns W (M x k).
Matrix lambda_only_fit(const Dataset& data, const Eigen::Ref<const Matrix>& fixed_Q);

/// Columns e_i + e_j for i <= j; k = d (d + 1) / 2.
Matrix eij_basis(Eigen::Index d);

}  // namespace qlnet
