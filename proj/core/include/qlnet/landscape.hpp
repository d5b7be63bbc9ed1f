#pragma once

#include "qlnet/common.hpp"
#include "qlnet/data.hpp"
#include "qlnet/model.hpp"
#include "qlnet/objective.hpp"
#include "qlnet/oracle.hpp"

#include <optional>
#include <string>

namespace qlnet {

enum class PointTag {
  GlobalMin,
  NegativeCurvature,
  /// Stationary, above the oracle loss, no descent curvature in Q, and every
  /// residual matrix S_m is semidefinite.
  SemidefiniteResidualNonGlobal,
  NotStationary,
  /// Stationary and non-global, but no curvature direction was found while
  /// some S_m is indefinite. The search is sampled, so this is possible.
  Inconclusive,
};

std::string to_string(PointTag t);

struct Tolerances {
  /// Gradient-norm threshold; negative selects 1e-6 (1 + ||y||^2 / N).
  double grad = -1.0;
  /// Optimality gap; negative selects 1e-6 (1 + loss_star).
  double f = -1.0;
  /// S counts as semidefinite when an extreme eigenvalue is within
  /// semidef_rel * ||S||_F of zero on the wrong side.
  double semidef_rel = 1e-8;
  /// Singular values above rank_rel * sigma_max count toward rank(Q).
  double rank_rel = 1e-6;
  /// A direction is negative when hess_quadform_Q(U) < -curvature * ||U||^2.
  /// Negative selects 1e-9 (1 + ||y||^2 / N).
  double curvature = -1.0;
  int random_probes = 200;
  std::uint64_t seed = 0;
};

struct PointClass {
  PointTag tag = PointTag::NotStationary;
  double grad_norm = 0.0;
  double loss = 0.0;
  double loss_star = 0.0;
  /// Extreme eigenvalues over all residual matrices S_m.
  double s_min = 0.0;
  double s_max = 0.0;
  Eigen::Index rank_Q = 0;
  /// Negative-curvature direction (d x k) when tag == NegativeCurvature.
  std::optional<Matrix> direction;
  double curvature_value = 0.0;
};

/// Count of singular values above rel * largest (0 for the zero matrix).
Eigen::Index numerical_rank(const Eigen::Ref<const Matrix>& A, double rel = 1e-6);

/// Structured search over U = u v^T (v in the null space of Q Lambda_m, u an
/// eigenvector of S_m or a vector orthogonal to range(Q)), then random
/// gaussian probes. Returns the first U with a negative quadratic form.
std::optional<Matrix> negative_curvature_search(const QLLayer& layer, const Dataset& data,
                                                const ObjectiveConfig& cfg, const Tolerances& tol = {},
                                                double* value = nullptr);

PointClass classify_point(const QLLayer& layer, const Dataset& data, const OracleSolution& oracle,
                          const ObjectiveConfig& cfg, const Tolerances& tol = {});

/// Spurious stationary point on positive definite lifted data: A = B^T B + I,
/// X_n = C_n^T C_n + I, y_n = A . X_n, point (lambda = -1, Q = 0, alpha = 0)
/// with k = d.
struct Example1 {
  Dataset data;
  QLLayer point;
  Matrix A;
};
Example1 make_example1(Eigen::Index d, Eigen::Index N, std::uint64_t seed);

}  // namespace qlnet
