#include "qlnet/landscape.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace qlnet {

namespace {

double scale_of(const Dataset& data) { return 1.0 + data.target_energy() / static_cast<double>(data.size()); }

// Orthonormal basis (columns) of the numerical null space of A.
Matrix null_space(const Matrix& A, double rel) {
  if (A.cols() == 0) return Matrix(0, 0);
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cut = s.size() > 0 ? rel * s.maxCoeff() : 0.0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > cut && s(i) > 0.0) ++r;
  return svd.matrixV().rightCols(A.cols() - r);
}

}  // namespace

std::string to_string(PointTag t) {
  switch (t) {
    case PointTag::GlobalMin:
      return "GlobalMin";
    case PointTag::NegativeCurvature:
      return "NegativeCurvature";
    case PointTag::SemidefiniteResidualNonGlobal:
      return "SemidefiniteResidualNonGlobal";
    case PointTag::NotStationary:
      return "NotStationary";
    case PointTag::Inconclusive:
      return "Inconclusive";
  }
  return "?";
}

Eigen::Index numerical_rank(const Eigen::Ref<const Matrix>& A, double rel) {
  if (A.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& s = svd.singularValues();
  const double top = s.maxCoeff();
  if (!(top > 0.0)) return 0;
  return (s.array() > rel * top).count();
}

std::optional<Matrix> negative_curvature_search(const QLLayer& layer, const Dataset& data,
                                                const ObjectiveConfig& cfg, const Tolerances& tol, double* value) {
  const Eigen::Index d = layer.input_dim();
  const Eigen::Index k = layer.width();
  const double thresh = tol.curvature >= 0.0 ? tol.curvature : 1e-9 * scale_of(data);

  auto probe = [&](const Matrix& U) -> bool {
    const double n2 = U.squaredNorm();
    if (!(n2 > 0.0)) return false;
    const double h = hess_quadform_Q(layer, data, cfg, U);
    if (h < -thresh * n2) {
      if (value) *value = h;
      return true;
    }
    return false;
  };

  if (k > 0) {
    // u candidates: eigenvectors of each S_m, plus directions orthogonal to range(Q).
    std::vector<Vector> us;
    for (Eigen::Index m = 0; m < layer.output_dim(); ++m) {
      const EigDecomp e = sym_eig(residual_matrix(layer, data, m));
      for (Eigen::Index i = 0; i < d; ++i) us.push_back(e.eigenvectors.col(i));
    }
    const Matrix left_null = null_space(layer.Q.transpose(), tol.rank_rel);
    for (Eigen::Index i = 0; i < left_null.cols(); ++i) us.push_back(left_null.col(i));

    // v candidates: null space of Q Lambda_m, pairwise combinations, and unit vectors.
    std::vector<Vector> vs;
    for (Eigen::Index m = 0; m < layer.output_dim(); ++m) {
      const Matrix N = null_space(layer.Q * layer.W.row(m).asDiagonal(), tol.rank_rel);
      for (Eigen::Index a = 0; a < N.cols(); ++a) {
        vs.push_back(N.col(a));
        for (Eigen::Index b = a + 1; b < N.cols(); ++b) {
          vs.push_back(N.col(a) + N.col(b));
          vs.push_back(N.col(a) - N.col(b));
        }
      }
    }
    for (Eigen::Index j = 0; j < k; ++j) vs.push_back(Vector::Unit(k, j));

    for (const auto& v : vs)
      for (const auto& u : us) {
        Matrix U = u * v.transpose();
        if (probe(U)) return U;
      }
  }

  Rng rng(derive_seed(tol.seed, 0xc0e7));
  for (int t = 0; t < tol.random_probes; ++t) {
    Matrix U = gaussian_matrix(d, k, 1.0, rng);
    if (probe(U)) return U;
  }
  return std::nullopt;
}

PointClass classify_point(const QLLayer& layer, const Dataset& data, const OracleSolution& oracle,
                          const ObjectiveConfig& cfg, const Tolerances& tol) {
  PointClass pc;
  const double tol_g = tol.grad >= 0.0 ? tol.grad : 1e-6 * scale_of(data);
  const double tol_f = tol.f >= 0.0 ? tol.f : 1e-6 * (1.0 + oracle.loss_star);

  pc.grad_norm = norm(grad(layer, data, cfg));
  pc.loss = loss_mse(layer, data);
  pc.loss_star = oracle.loss_star;
  pc.rank_Q = numerical_rank(layer.Q, tol.rank_rel);

  bool all_semidefinite = true;
  pc.s_min = std::numeric_limits<double>::infinity();
  pc.s_max = -std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < layer.output_dim(); ++m) {
    const Matrix S = residual_matrix(layer, data, m);
    const EigDecomp e = sym_eig(S);
    const double lo = e.eigenvalues.minCoeff();
    const double hi = e.eigenvalues.maxCoeff();
    pc.s_min = std::min(pc.s_min, lo);
    pc.s_max = std::max(pc.s_max, hi);
    const double margin = tol.semidef_rel * S.norm();
    if (!(lo >= -margin || hi <= margin)) all_semidefinite = false;
  }

  if (pc.grad_norm > tol_g) {
    pc.tag = PointTag::NotStationary;
    return pc;
  }
  if (pc.loss <= oracle.loss_star + tol_f) {
    pc.tag = PointTag::GlobalMin;
    return pc;
  }
  double h = 0.0;
  if (auto U = negative_curvature_search(layer, data, cfg, tol, &h)) {
    pc.tag = PointTag::NegativeCurvature;
    pc.direction = std::move(U);
    pc.curvature_value = h;
    return pc;
  }
  pc.tag = all_semidefinite ? PointTag::SemidefiniteResidualNonGlobal : PointTag::Inconclusive;
  return pc;
}

Example1 make_example1(Eigen::Index d, Eigen::Index N, std::uint64_t seed) {
  if (d < 1 || N < 1) throw ConfigError("make_example1: need d >= 1 and N >= 1");
  Rng rng(seed);
  const Matrix B = gaussian_matrix(d, d, 1.0, rng);
  Matrix A = B.transpose() * B + Matrix::Identity(d, d);
  std::vector<Matrix> X;
  X.reserve(static_cast<std::size_t>(N));
  Vector y(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Matrix C = gaussian_matrix(d, d, 1.0, rng);
    X.push_back(C.transpose() * C + Matrix::Identity(d, d));
    y(n) = A.cwiseProduct(X.back()).sum();
  }
  Example1 ex;
  ex.data = Dataset::lifted(std::move(X), y, DatasetMeta{"example1", seed, A});
  ex.point = QLLayer::scalar(Matrix::Zero(d, d), -Vector::Ones(d), 0.0);
  ex.A = std::move(A);
  return ex;
}

}  // namespace qlnet
