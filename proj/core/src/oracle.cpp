#include "qlnet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace qlnet {

namespace {

double off_diagonal_norm(const Matrix& A) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      if (i != j) s += A(i, j) * A(i, j);
  return std::sqrt(s);
}

// A <- J^T A J and V <- V J for the rotation zeroing A(p, q).
void rotate(Matrix& A, Matrix& V, Eigen::Index p, Eigen::Index q) {
  const double apq = A(p, q);
  const double tau = (A(q, q) - A(p, p)) / (2.0 * apq);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;
  const Eigen::Index n = A.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double akp = A(k, p), akq = A(k, q);
    A(k, p) = c * akp - s * akq;
    A(k, q) = s * akp + c * akq;
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double apk = A(p, k), aqk = A(q, k);
    A(p, k) = c * apk - s * aqk;
    A(q, k) = s * apk + c * aqk;
  }
  A(p, q) = A(q, p) = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double vkp = V(k, p), vkq = V(k, q);
    V(k, p) = c * vkp - s * vkq;
    V(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

EigDecomp sym_eig(const Eigen::Ref<const Matrix>& A_in, const EigOptions& opts) {
  if (A_in.rows() != A_in.cols()) throw ShapeError("sym_eig: matrix must be square");
  if (!A_in.allFinite()) throw NumericalError("sym_eig: non-finite input");
  const Eigen::Index n = A_in.rows();
  Matrix A = 0.5 * (A_in + A_in.transpose());
  Matrix V = Matrix::Identity(n, n);
  const double scale = A.norm();
  const long budget = std::max<long>(1, opts.max_rotation_factor * static_cast<long>(n * n));
  long rotations = 0;

  while (off_diagonal_norm(A) > opts.tol * scale) {
    for (Eigen::Index p = 0; p + 1 < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (A(p, q) == 0.0) continue;
        if (rotations >= budget)
          throw NumericalError("sym_eig: no convergence after " + std::to_string(rotations) +
                               " rotations (off-diagonal mass " + std::to_string(off_diagonal_norm(A)) +
                               ", target " + std::to_string(opts.tol * scale) + ")");
        rotate(A, V, p, q);
        ++rotations;
      }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return A(a, a) > A(b, b); });
  EigDecomp out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigenvalues(i) = A(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.eigenvectors.col(i) = V.col(order[static_cast<std::size_t>(i)]);
  }
  out.rotations = rotations;
  return out;
}

Vector lift_quadratic(const Eigen::Ref<const Vector>& x, bool include_norm) {
  const Eigen::Index d = x.size();
  Vector f(d * (d + 1) / 2 + (include_norm ? 1 : 0));
  Eigen::Index t = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) f(t++) = x(i) * x(j);
  if (include_norm) f(t) = x.squaredNorm();
  return f;
}

Vector quadratic_coefficients(const Eigen::Ref<const Matrix>& A) {
  if (A.rows() != A.cols()) throw ShapeError("quadratic_coefficients: A must be square");
  const Eigen::Index d = A.rows();
  Vector c(d * (d + 1) / 2);
  Eigen::Index t = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) c(t++) = i == j ? A(i, i) : A(i, j) + A(j, i);
  return c;
}

Matrix quadratic_matrix(const Eigen::Ref<const Vector>& c, Eigen::Index d) {
  if (c.size() != d * (d + 1) / 2) throw ShapeError("quadratic_matrix: expected d(d+1)/2 coefficients");
  Matrix A(d, d);
  Eigen::Index t = 0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j, ++t) {
      if (i == j)
        A(i, i) = c(t);
      else
        A(i, j) = A(j, i) = 0.5 * c(t);
    }
  return A;
}

Vector lift_monomials(const Eigen::Ref<const Vector>& x, int p) {
  if (p < 1) throw ConfigError("lift_monomials: degree must be >= 1");
  const auto sets = multisets(static_cast<int>(x.size()), p);
  Vector f(static_cast<Eigen::Index>(sets.size()));
  for (std::size_t t = 0; t < sets.size(); ++t) {
    double v = 1.0;
    for (int i : sets[t]) v *= x(i);
    f(static_cast<Eigen::Index>(t)) = v;
  }
  return f;
}

Matrix feature_matrix(const Dataset& data, int degree, bool include_norm) {
  if (degree < 1) throw ConfigError("feature_matrix: degree must be >= 1");
  if (include_norm && degree != 2) throw ConfigError("feature_matrix: the norm feature requires degree 2");
  const Eigen::Index N = data.size();
  const Eigen::Index d = data.input_dim();
  if (data.is_lifted()) {
    if (degree != 2) throw ShapeError("feature_matrix: pre-lifted samples support degree 2 only");
    Matrix Phi(N, d * (d + 1) / 2 + (include_norm ? 1 : 0));
    for (Eigen::Index n = 0; n < N; ++n) {
      const Matrix& X = data.lifted_samples()[static_cast<std::size_t>(n)];
      Eigen::Index t = 0;
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i; j < d; ++j) Phi(n, t++) = X(i, j);
      if (include_norm) Phi(n, t) = X.trace();
    }
    return Phi;
  }
  if (degree == 2) {
    Matrix Phi(N, d * (d + 1) / 2 + (include_norm ? 1 : 0));
    for (Eigen::Index n = 0; n < N; ++n) Phi.row(n) = lift_quadratic(data.inputs().row(n).transpose(), include_norm);
    return Phi;
  }
  const auto sets = multisets(static_cast<int>(d), degree);
  Matrix Phi(N, static_cast<Eigen::Index>(sets.size()));
  for (std::size_t t = 0; t < sets.size(); ++t) {
    Vector col = Vector::Ones(N);
    for (int i : sets[t]) col = col.cwiseProduct(data.inputs().col(i));
    Phi.col(static_cast<Eigen::Index>(t)) = col;
  }
  return Phi;
}

LeastSquaresFit least_squares(const Eigen::Ref<const Matrix>& Phi, const Eigen::Ref<const Matrix>& Y) {
  if (Phi.rows() != Y.rows()) throw ShapeError("least_squares: feature and target row counts differ");
  if (Phi.rows() < 1) throw ShapeError("least_squares: no samples");
  LeastSquaresFit fit;
  if (Phi.cols() == 0) {
    fit.coefficients = Matrix::Zero(0, Y.cols());
    return fit;
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Phi);
  fit.rank = cod.rank();
  fit.rank_deficient = fit.rank < Phi.cols();
  fit.coefficients = fit.rank == 0 ? Matrix(Matrix::Zero(Phi.cols(), Y.cols())) : Matrix(cod.solve(Y));
  return fit;
}

OracleSolution solve_oracle(const Dataset& data, int degree, bool include_norm) {
  const Matrix Phi = feature_matrix(data, degree, include_norm);
  const LeastSquaresFit fit = least_squares(Phi, data.targets());
  const Eigen::Index d = data.input_dim();
  const Eigen::Index M = data.output_dim();

  OracleSolution sol;
  sol.degree = degree;
  sol.include_norm = include_norm;
  sol.input_dim = d;
  sol.coefficients = fit.coefficients;
  sol.rank = fit.rank;
  sol.rank_deficient = fit.rank_deficient;
  const Matrix R = data.targets() - Phi * fit.coefficients;
  sol.loss_star = R.squaredNorm() / static_cast<double>(R.size());
  sol.alpha_star = Vector::Zero(M);

  if (degree == 2) {
    const Eigen::Index nq = d * (d + 1) / 2;
    double res2 = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) {
      sol.A.push_back(quadratic_matrix(fit.coefficients.col(m).head(nq), d));
      if (include_norm) sol.alpha_star(m) = fit.coefficients(nq, m);
      Matrix S = Matrix::Zero(d, d);
      if (data.is_lifted()) {
        for (Eigen::Index n = 0; n < data.size(); ++n)
          S += R(n, m) * data.lifted_samples()[static_cast<std::size_t>(n)];
      } else {
        S = data.inputs().transpose() * R.col(m).asDiagonal() * data.inputs();
      }
      res2 += S.squaredNorm();
    }
    sol.residual_norm = std::sqrt(res2);
  }
  return sol;
}

double oracle_nmse(const OracleSolution& sol, const Dataset& data) {
  const double energy = data.target_energy();
  if (!(energy > 0.0)) throw ConfigError("oracle_nmse: all-zero targets");
  return sol.loss_star * static_cast<double>(data.targets().size()) / energy;
}

QLLayer closed_form_solver(const Dataset& data, bool include_norm, Eigen::Index k) {
  const OracleSolution sol = solve_oracle(data, 2, include_norm);
  const Eigen::Index d = sol.input_dim;
  const Eigen::Index M = data.output_dim();
  const Eigen::Index kmin = M * d;
  if (k == 0) k = kmin;
  if (k < kmin)
    throw ConfigError("closed_form_solver: width " + std::to_string(k) + " is below the minimum " +
                      std::to_string(kmin));
  Matrix Q = Matrix::Zero(d, k);
  Matrix W = Matrix::Zero(M, k);
  for (Eigen::Index m = 0; m < M; ++m) {
    const EigDecomp e = sym_eig(sol.A[static_cast<std::size_t>(m)]);
    Q.middleCols(m * d, d) = e.eigenvectors;
    W.row(m).segment(m * d, d) = e.eigenvalues.transpose();
  }
  return QLLayer(std::move(Q), std::move(W), sol.alpha_star);
}

Matrix lambda_only_fit(const Dataset& data, const Eigen::Ref<const Matrix>& fixed_Q) {
  if (fixed_Q.rows() != data.input_dim())
    throw ShapeError("lambda_only_fit: Q has " + std::to_string(fixed_Q.rows()) + " rows, data dim is " +
                     std::to_string(data.input_dim()));
  Matrix Phi(data.size(), fixed_Q.cols());
  if (data.is_lifted()) {
    for (Eigen::Index n = 0; n < data.size(); ++n)
      Phi.row(n) =
          (fixed_Q.transpose() * data.lifted_samples()[static_cast<std::size_t>(n)] * fixed_Q).diagonal().transpose();
  } else {
    Phi = (data.inputs() * fixed_Q).array().square();
  }
  return least_squares(Phi, data.targets()).coefficients.transpose();
}

Matrix eij_basis(Eigen::Index d) {
  if (d < 1) throw ConfigError("eij_basis: d must be >= 1");
  return poly_basis_init(static_cast<int>(d), 2);
}

}  // namespace qlnet
