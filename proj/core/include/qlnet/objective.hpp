#pragma once

#include "qlnet/common.hpp"
#include "qlnet/data.hpp"
#include "qlnet/model.hpp"

#include <vector>

namespace qlnet {

/// How the orthogonality penalty is applied to quadratic weights.
enum class PenaltyMode {
  /// ||Q Q^T - I||^2 on each layer's full Q.
  Full,
  /// Sum over consecutive column blocks Q_b (block size = layer input dim):
  /// sum_b ||Q_b Q_b^T - I||^2.
  PerBlock,
  /// Deep nets only: ||Qt Qt^T - I||^2 with Qt = [vec(A_1) ... vec(A_h)] for
  /// hidden layers and the raw Q on the last layer.
  Matricized,
};

struct ObjectiveConfig {
  /// Orthogonality penalty weight; 0 disables the penalty.
  double gamma = 0.0;
  /// Train the norm-regressor coefficients alpha. Pinned to their current
  /// value (usually 0) otherwise.
  bool use_alpha = false;
  PenaltyMode penalty_mode = PenaltyMode::Full;

  void validate() const;
};

/// gamma = (1/(MN)) sum y^2 + eps, strictly above the zero-model loss.
double default_gamma(const Dataset& data, double eps = 1e-6);

/// Parameter-shaped container, one entry per layer. Used both for gradients
/// and for search directions. For PolyLayer, W is the 1 x k row lambda^T and
/// alpha is empty.
struct LayerGrad {
  Matrix Q;
  Matrix W;
  Vector alpha;
};
using Gradient = std::vector<LayerGrad>;

/// Zero container shaped like the model.
Gradient zeros_like(const AnyModel& model);
double squared_norm(const Gradient& g);
inline double norm(const Gradient& g) { return std::sqrt(squared_norm(g)); }
/// model += step * direction.
void add_scaled(AnyModel& model, double step, const Gradient& direction);

// --- forward / losses -----------------------------------------------------------

/// N x M predictions. Deep and poly models require vector (non-lifted) data.
Matrix predict(const AnyModel& model, const Dataset& data);
/// Y - predictions.
Matrix residuals(const AnyModel& model, const Dataset& data);

/// (1/(MN)) sum_{m,n} r_mn^2. Throws ShapeError on dimension mismatch.
double loss_mse(const AnyModel& model, const Dataset& data);

/// ||Q Q^T - I_d||_F^2.
double penalty_orth(const Eigen::Ref<const Matrix>& Q);
/// sum over column blocks of width `block`: ||Q_b Q_b^T - I||_F^2.
double penalty_orth_blocks(const Eigen::Ref<const Matrix>& Q, Eigen::Index block);
/// ||(Q^T Q)^{.p} - I_k||_F^2 (Hadamard power).
double penalty_hadamard(const Eigen::Ref<const Matrix>& Q, int p);
/// Columns vec(Q diag(W_i) Q^T), one per output row i of W.
Matrix matricize_layer(const QLLayer& layer);

/// Penalty term (without gamma) selected by the config for this model.
double penalty(const AnyModel& model, const ObjectiveConfig& cfg);
/// loss_mse + gamma * penalty.
double objective(const AnyModel& model, const Dataset& data, const ObjectiveConfig& cfg);

/// Analytic gradient of objective(). alpha entries are zero unless cfg.use_alpha.
Gradient grad(const AnyModel& model, const Dataset& data, const ObjectiveConfig& cfg);

/// d^2/dt^2 objective(model + t * direction) at t = 0, exact.
double second_directional_derivative(const AnyModel& model, const Dataset& data,
                                     const ObjectiveConfig& cfg, const Gradient& direction);

/// Hessian quadratic form of the objective restricted to Q-directions U
/// (d x k) of a single-layer model: d^2/dt^2 F(alpha, W, Q + tU). For a
/// scalar output this equals
///   (8/N) sum_n (X_n Q Lambda . U)^2 - (4/N) sum_n r_n X_n . U Lambda U^T
/// plus gamma times the second derivative of the penalty.
double hess_quadform_Q(const QLLayer& layer, const Dataset& data, const ObjectiveConfig& cfg,
                       const Eigen::Ref<const Matrix>& U);

/// S = sum_n r_n X_n for output channel m (symmetric d x d).
Matrix residual_matrix(const QLLayer& layer, const Dataset& data, Eigen::Index channel = 0);

/// Loss with a full symmetric k x k middle matrix:
/// (1/N) sum_n (y_n - (Q M Q^T + alpha I) . X_n)^2 (scalar output).
double loss_mse_general(const Eigen::Ref<const Matrix>& Q, const Eigen::Ref<const Matrix>& M, double alpha,
                        const Dataset& data);

struct EquivalentPoint {
  Vector lambda;  ///< eigenvalues of M, descending
  Matrix U;       ///< orthonormal eigenvectors, M = U diag(lambda) U^T
  Matrix QU;      ///< mapped first-layer weights
};

/// Maps (M, Q) to the diagonal landscape: M = U Lambda U^T -> (Lambda, QU).
EquivalentPoint equivalence_map(const Eigen::Ref<const Matrix>& M, const Eigen::Ref<const Matrix>& Q);

}  // namespace qlnet
