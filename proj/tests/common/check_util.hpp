#pragma once
// Independent reference computations shared by the unit and acceptance tests.

#include "qlnet/data.hpp"
#include "qlnet/model.hpp"
#include "qlnet/objective.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace qlnet::check {

// Visits every scalar parameter of a Gradient-shaped container.
inline void for_each_coord(Gradient& g, bool include_alpha, const std::function<void(double&)>& fn) {
  for (auto& l : g) {
    for (Eigen::Index i = 0; i < l.Q.size(); ++i) fn(l.Q.data()[i]);
    for (Eigen::Index i = 0; i < l.W.size(); ++i) fn(l.W.data()[i]);
    if (include_alpha)
      for (Eigen::Index i = 0; i < l.alpha.size(); ++i) fn(l.alpha.data()[i]);
  }
}

struct FdReport {
  double max_rel_error = 0.0;
  int coords = 0;
};

// Central differences of objective() along every coordinate. A coordinate's
// error is |analytic - fd| / max(|analytic|, |fd|, floor) with
// floor = 1e-6 * (1 + max |analytic|): entries that are zero up to rounding
// are compared on the scale of the whole gradient.
inline FdReport fd_gradient_check(const AnyModel& model, const Dataset& data, const ObjectiveConfig& cfg,
                                  double h = 1e-5) {
  Gradient analytic = grad(model, data, cfg);
  const bool with_alpha = cfg.use_alpha && std::holds_alternative<QLLayer>(model);
  double gmax = 0.0;
  for_each_coord(analytic, with_alpha, [&](double& v) { gmax = std::max(gmax, std::abs(v)); });
  const double floor = 1e-6 * (1.0 + gmax);

  Gradient dir = zeros_like(model);
  std::vector<double*> slots;
  for_each_coord(dir, with_alpha, [&](double& v) { slots.push_back(&v); });
  std::vector<double> values;
  for_each_coord(analytic, with_alpha, [&](double& v) { values.push_back(v); });

  FdReport rep;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    *slots[i] = 1.0;
    AnyModel plus = model, minus = model;
    add_scaled(plus, h, dir);
    add_scaled(minus, -h, dir);
    *slots[i] = 0.0;
    const double fd = (objective(plus, data, cfg) - objective(minus, data, cfg)) / (2.0 * h);
    const double a = values[i];
    const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
    rep.max_rel_error = std::max(rep.max_rel_error, err);
    ++rep.coords;
  }
  return rep;
}

// (F(theta + hD) - 2 F(theta) + F(theta - hD)) / h^2.
inline double fd_second_derivative(const AnyModel& model, const Dataset& data, const ObjectiveConfig& cfg,
                                   const Gradient& dir, double h = 1e-4) {
  AnyModel plus = model, minus = model;
  add_scaled(plus, h, dir);
  add_scaled(minus, -h, dir);
  return (objective(plus, data, cfg) - 2.0 * objective(model, data, cfg) + objective(minus, data, cfg)) / (h * h);
}

inline double rel_error(double a, double b, double floor = 0.0) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor, 1e-300});
}

// Depth-2 net output as the explicit contraction sum_{abce} T_abce x_a x_b x_c x_e
// with T = sum_{i,i'} B_ii' A_i (x) A_i', A_i = Q1 diag(W1_i) Q1^T, B = Q2 diag(W2_0) Q2^T.
inline double deep2_tensor_output(const DeepQLNet& net, const Vector& x) {
  const QLLayer& l1 = net.layers.at(0);
  const QLLayer& l2 = net.layers.at(1);
  const Eigen::Index d = l1.input_dim();
  const Eigen::Index h = l1.output_dim();
  std::vector<Matrix> A;
  for (Eigen::Index i = 0; i < h; ++i) {
    Matrix Ai = Matrix::Zero(d, d);
    for (Eigen::Index j = 0; j < l1.width(); ++j) Ai += l1.W(i, j) * l1.Q.col(j) * l1.Q.col(j).transpose();
    A.push_back(Ai);
  }
  Matrix B = Matrix::Zero(h, h);
  for (Eigen::Index j = 0; j < l2.width(); ++j) B += l2.W(0, j) * l2.Q.col(j) * l2.Q.col(j).transpose();
  double out = 0.0;
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b)
      for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index e = 0; e < d; ++e) {
          double t = 0.0;
          for (Eigen::Index i = 0; i < h; ++i)
            for (Eigen::Index k = 0; k < h; ++k) t += B(i, k) * A[static_cast<std::size_t>(i)](a, b) * A[static_cast<std::size_t>(k)](c, e);
          out += t * x(a) * x(b) * x(c) * x(e);
        }
  return out;
}

// sum over all index tuples (a_1..a_p) of T_{a_1..a_p} x_{a_1}...x_{a_p}, with
// T = sum_i lambda_i q_i^{(x)p}.
inline double poly_tensor_output(const Matrix& Q, const Vector& lambda, int p, const Vector& x) {
  const Eigen::Index d = Q.rows();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(p), 0);
  double out = 0.0;
  while (true) {
    double t = 0.0;
    for (Eigen::Index i = 0; i < Q.cols(); ++i) {
      double prod = lambda(i);
      for (auto a : idx) prod *= Q(a, i);
      t += prod;
    }
    double xs = 1.0;
    for (auto a : idx) xs *= x(a);
    out += t * xs;
    std::size_t pos = 0;
    while (pos < idx.size() && ++idx[pos] == d) idx[pos++] = 0;
    if (pos == idx.size()) break;
  }
  return out;
}

// --- random evaluation points ------------------------------------------------------

inline QLLayer random_layer(Eigen::Index d, Eigen::Index k, Eigen::Index M, std::uint64_t seed) {
  Rng rng(seed);
  Matrix Q = gaussian_matrix(d, k, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  Matrix W = gaussian_matrix(M, k, 0.5, rng);
  Vector a = gaussian_vector(M, 0.3, rng);
  return QLLayer(std::move(Q), std::move(W), std::move(a));
}

inline DeepQLNet random_deep(Eigen::Index d, Eigen::Index h1, std::uint64_t seed) {
  Rng rng(seed);
  const WidthSchedule s = two_layer_schedule(d, h1);
  std::vector<QLLayer> layers;
  for (std::size_t l = 0; l < s.depth(); ++l) {
    Matrix Q = gaussian_matrix(s.h[l], s.m[l], 1.0 / std::sqrt(static_cast<double>(s.h[l])), rng);
    Matrix W = gaussian_matrix(s.h[l + 1], s.m[l], 1.0 / std::sqrt(static_cast<double>(s.m[l])), rng);
    layers.emplace_back(std::move(Q), std::move(W), Vector::Zero(s.h[l + 1]));
  }
  return DeepQLNet(std::move(layers));
}

inline PolyLayer random_poly(Eigen::Index d, int p, Eigen::Index k, std::uint64_t seed) {
  Rng rng(seed);
  Matrix Q = gaussian_matrix(d, k, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  Vector l = gaussian_vector(k, 0.5, rng);
  return PolyLayer(p, std::move(Q), std::move(l));
}

inline Gradient random_direction(const AnyModel& model, std::uint64_t seed, bool with_alpha = false) {
  Rng rng(seed);
  std::normal_distribution<double> dist;
  Gradient g = zeros_like(model);
  for_each_coord(g, with_alpha, [&](double& v) { v = dist(rng); });
  return g;
}

}  // namespace qlnet::check
