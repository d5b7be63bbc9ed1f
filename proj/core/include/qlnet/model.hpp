#pragma once

#include "qlnet/common.hpp"

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace qlnet {

/// One quadratic-linear layer: z = (Q^T x)^2 followed by the linear map W,
/// plus the fixed norm regressor alpha_m * ||x||^2 on each output.
///
/// Q is d_in x k (column j is neuron q_j). W is M x k; row m holds the
/// diagonal of Lambda_m. alpha has one entry per output.
struct QLLayer {
  Matrix Q;
  Matrix W;
  Vector alpha;

  QLLayer() = default;
  QLLayer(Matrix q, Matrix w, Vector a);

  /// Scalar-output layer from (lambda, Q, alpha).
  static QLLayer scalar(const Matrix& q, const Vector& lambda, double alpha = 0.0);

  Eigen::Index input_dim() const { return Q.rows(); }
  Eigen::Index width() const { return Q.cols(); }
  Eigen::Index output_dim() const { return W.rows(); }

  /// Second-layer weights of output m as a vector (the diagonal of Lambda_m).
  Vector lambda(Eigen::Index m = 0) const { return W.row(m).transpose(); }

  /// Symmetric coefficient matrix Q Lambda_m Q^T + alpha_m I of output m.
  Matrix coefficient_matrix(Eigen::Index m = 0) const;

  /// Throws ShapeError / ConfigError when the invariants are violated.
  void validate() const;
};

/// Width schedule of a deep QL network: h[0] = input dim, h[L] = output dim,
/// m[l-1] = hidden width (neurons) of layer l.
struct WidthSchedule {
  std::vector<Eigen::Index> h;
  std::vector<Eigen::Index> m;

  std::size_t depth() const { return m.size(); }
};

/// Overparameterized schedule for depth L on input dim d:
/// h_l = d^(2^(L-l)) and m_l = h_{l-1} * h_l.
WidthSchedule overparam_width_schedule(Eigen::Index d, std::size_t depth);

/// Two-layer schedule used by the h1 sweeps: h = (d, h1, 1), m = (d*h1, h1).
WidthSchedule two_layer_schedule(Eigen::Index d, Eigen::Index h1);

/// Ordered stack of QL layers. Intermediate alpha terms are carried but
/// always zero; only the layer weights Q and W participate.
struct DeepQLNet {
  std::vector<QLLayer> layers;

  DeepQLNet() = default;
  explicit DeepQLNet(std::vector<QLLayer> ls);

  std::size_t depth() const { return layers.size(); }
  Eigen::Index input_dim() const { return layers.front().input_dim(); }
  Eigen::Index output_dim() const { return layers.back().output_dim(); }
  WidthSchedule schedule() const;

  /// Zero-initialized network matching the schedule.
  static DeepQLNet zeros(const WidthSchedule& s);
  void validate() const;
};

/// Degree-p polynomial-linear layer: f(x) = sum_i lambda_i (q_i^T x)^p.
struct PolyLayer {
  int degree = 2;
  Matrix Q;
  Vector lambda;

  PolyLayer() = default;
  PolyLayer(int p, Matrix q, Vector l);

  Eigen::Index input_dim() const { return Q.rows(); }
  Eigen::Index width() const { return Q.cols(); }
  void validate() const;
};

using AnyModel = std::variant<QLLayer, DeepQLNet, PolyLayer>;

// --- forward passes -------------------------------------------------------

/// output_m = sum_j W_mj (q_j^T x)^2 + alpha_m ||x||^2.
Vector forward_single(const QLLayer& layer, const Eigen::Ref<const Vector>& x);
/// Row-wise forward over an N x d input block; returns N x M.
Matrix forward_single_batch(const QLLayer& layer, const Eigen::Ref<const Matrix>& X);

/// Composition of the layers (alpha terms ignored); returns output_dim values.
Vector forward_deep(const DeepQLNet& net, const Eigen::Ref<const Vector>& x);
Matrix forward_deep_batch(const DeepQLNet& net, const Eigen::Ref<const Matrix>& X);

double forward_poly(const PolyLayer& layer, const Eigen::Ref<const Vector>& x);
Vector forward_poly_batch(const PolyLayer& layer, const Eigen::Ref<const Matrix>& X);

// --- polynomial basis -------------------------------------------------------

/// Number of multisets of size p drawn from d items: C(d+p-1, d-1).
std::uint64_t multiset_count(std::uint64_t d, std::uint64_t p);

/// All nondecreasing index tuples i_1 <= ... <= i_p over {0..d-1}, in
/// lexicographic order.
std::vector<std::vector<int>> multisets(int d, int p);

/// d x C(d+p-1, d-1) matrix with one column e_{i_1} + ... + e_{i_p} per
/// multiset, lexicographic order.
Matrix poly_basis_init(int d, int p);

}  // namespace qlnet
