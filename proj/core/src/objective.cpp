#include "qlnet/objective.hpp"

#include "qlnet/oracle.hpp"

#include <string>
#include <type_traits>

namespace qlnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Truncated Taylor polynomial v + t d1 + t^2 d2 of a matrix-valued function.
struct Jet {
  Matrix v, d1, d2;

  static Jet constant(const Matrix& m) {
    return {m, Matrix::Zero(m.rows(), m.cols()), Matrix::Zero(m.rows(), m.cols())};
  }
  static Jet linear(const Matrix& m, const Matrix& dir) {
    return {m, dir, Matrix::Zero(m.rows(), m.cols())};
  }
  Jet transpose() const { return {v.transpose(), d1.transpose(), d2.transpose()}; }
};

Jet operator*(const Jet& a, const Jet& b) {
  return {a.v * b.v, a.v * b.d1 + a.d1 * b.v, a.v * b.d2 + a.d1 * b.d1 + a.d2 * b.v};
}

Jet hadamard(const Jet& a, const Jet& b) {
  return {a.v.cwiseProduct(b.v), a.v.cwiseProduct(b.d1) + a.d1.cwiseProduct(b.v),
          a.v.cwiseProduct(b.d2) + a.d1.cwiseProduct(b.d1) + a.d2.cwiseProduct(b.v)};
}

Jet power(const Jet& a, int p) {
  const auto v = a.v.array();
  const Eigen::ArrayXXd vp1 = v.pow(p - 1);
  const Eigen::ArrayXXd vp2 = v.pow(p - 2);
  Jet out;
  out.v = v.pow(p).matrix();
  out.d1 = (p * vp1 * a.d1.array()).matrix();
  out.d2 = (p * vp1 * a.d2.array() + 0.5 * p * (p - 1) * vp2 * a.d1.array().square()).matrix();
  return out;
}

Jet minus_identity(Jet a) {
  a.v -= Matrix::Identity(a.v.rows(), a.v.cols());
  return a;
}

// d^2/dt^2 ||E(t)||_F^2 at t = 0.
double squared_norm_curvature(const Jet& e) {
  return 2.0 * (e.d1.squaredNorm() + 2.0 * e.v.cwiseProduct(e.d2).sum());
}

// d^2/dt^2 (1/(MN)) sum (Y - pred(t))^2 at t = 0.
double loss_curvature(const Jet& pred, const Matrix& Y) {
  const Matrix r = Y - pred.v;
  const double scale = 2.0 / static_cast<double>(Y.size());
  return scale * (pred.d1.squaredNorm() - 2.0 * r.cwiseProduct(pred.d2).sum());
}

void require_vector_data(const Dataset& data, const char* who) {
  if (data.is_lifted()) throw ShapeError(std::string(who) + ": requires vector (non-lifted) inputs");
}

void check_input_dim(Eigen::Index model_dim, const Dataset& data, const char* who) {
  if (data.input_dim() != model_dim)
    throw ShapeError(std::string(who) + ": data has input dim " + std::to_string(data.input_dim()) +
                     ", model expects " + std::to_string(model_dim));
}

void check_output_dim(Eigen::Index model_dim, const Dataset& data, const char* who) {
  if (data.output_dim() != model_dim)
    throw ShapeError(std::string(who) + ": data has " + std::to_string(data.output_dim()) +
                     " output channels, model produces " + std::to_string(model_dim));
}

// --- contractions against X_n that work for vector and pre-lifted samples ---

// N x k matrix of q_j^T X_n q_j.
Matrix quad_features(const Dataset& data, const Matrix& Q) {
  if (!data.is_lifted()) return (data.inputs() * Q).array().square();
  const auto& X = data.lifted_samples();
  Matrix out(data.size(), Q.cols());
  for (Eigen::Index n = 0; n < data.size(); ++n)
    out.row(n) = (Q.transpose() * X[static_cast<std::size_t>(n)] * Q).diagonal().transpose();
  return out;
}

// N x k matrix of u_j^T X_n q_j.
Matrix bilinear_features(const Dataset& data, const Matrix& U, const Matrix& Q) {
  if (!data.is_lifted()) return (data.inputs() * U).cwiseProduct(data.inputs() * Q);
  const auto& X = data.lifted_samples();
  Matrix out(data.size(), Q.cols());
  for (Eigen::Index n = 0; n < data.size(); ++n)
    out.row(n) = (U.transpose() * X[static_cast<std::size_t>(n)] * Q).diagonal().transpose();
  return out;
}

// N-vector of trace(X_n) = ||x_n||^2.
Vector trace_feature(const Dataset& data) {
  if (!data.is_lifted()) return data.inputs().rowwise().squaredNorm();
  Vector s(data.size());
  for (Eigen::Index n = 0; n < data.size(); ++n) s(n) = data.lifted_samples()[static_cast<std::size_t>(n)].trace();
  return s;
}

// d x k matrix sum_n X_n Q diag(C_n.), C is N x k.
Matrix weighted_XQ(const Dataset& data, const Matrix& C, const Matrix& Q) {
  if (!data.is_lifted()) {
    const Matrix proj = data.inputs() * Q;
    return data.inputs().transpose() * C.cwiseProduct(proj);
  }
  Matrix out = Matrix::Zero(Q.rows(), Q.cols());
  for (Eigen::Index n = 0; n < data.size(); ++n)
    out += data.lifted_samples()[static_cast<std::size_t>(n)] * Q * C.row(n).transpose().asDiagonal();
  return out;
}

// --- penalties -------------------------------------------------------------------

Eigen::Index checked_blocks(Eigen::Index cols, Eigen::Index block, const char* who) {
  if (block < 1 || cols % block != 0)
    throw ConfigError(std::string(who) + ": width " + std::to_string(cols) +
                      " is not a multiple of the block size " + std::to_string(block));
  return cols / block;
}

Matrix orth_gradient(const Matrix& Q) {
  return 4.0 * (Q * Q.transpose() - Matrix::Identity(Q.rows(), Q.rows())) * Q;
}

Matrix orth_blocks_gradient(const Matrix& Q, Eigen::Index block) {
  const auto nb = checked_blocks(Q.cols(), block, "penalty");
  Matrix g(Q.rows(), Q.cols());
  for (Eigen::Index b = 0; b < nb; ++b) g.middleCols(b * block, block) = orth_gradient(Q.middleCols(b * block, block));
  return g;
}

double orth_curvature(const Matrix& Q, const Matrix& U) {
  const Jet q = Jet::linear(Q, U);
  return squared_norm_curvature(minus_identity(q * q.transpose()));
}

double orth_blocks_curvature(const Matrix& Q, const Matrix& U, Eigen::Index block) {
  const auto nb = checked_blocks(Q.cols(), block, "penalty");
  double c = 0.0;
  for (Eigen::Index b = 0; b < nb; ++b)
    c += orth_curvature(Q.middleCols(b * block, block), U.middleCols(b * block, block));
  return c;
}

Matrix hadamard_gradient(const Matrix& Q, int p) {
  const Eigen::ArrayXXd G = (Q.transpose() * Q).array();
  const Eigen::ArrayXXd I = Matrix::Identity(G.rows(), G.cols()).array();
  const Matrix B = (2.0 * (G.pow(p) - I) * p * G.pow(p - 1)).matrix();
  return 2.0 * Q * B;
}

double hadamard_curvature(const Matrix& Q, const Matrix& U, int p) {
  const Jet q = Jet::linear(Q, U);
  return squared_norm_curvature(minus_identity(power(q.transpose() * q, p)));
}

// Matricized Qt of a layer as a jet along (dQ, dW).
Jet matricize_jet(const QLLayer& layer, const Matrix& dQ, const Matrix& dW) {
  const auto h = layer.input_dim();
  const auto outs = layer.output_dim();
  const Jet q = Jet::linear(layer.Q, dQ);
  Jet out = Jet::constant(Matrix::Zero(h * h, outs));
  for (Eigen::Index i = 0; i < outs; ++i) {
    const Jet w = Jet::linear(layer.W.row(i).transpose().asDiagonal().toDenseMatrix(),
                              dW.row(i).transpose().asDiagonal().toDenseMatrix());
    const Jet A = q * w * q.transpose();
    out.v.col(i) = A.v.reshaped();
    out.d1.col(i) = A.d1.reshaped();
    out.d2.col(i) = A.d2.reshaped();
  }
  return out;
}

// Gradient of ||Qt Qt^T - I||^2 with respect to (Q, W) of a hidden layer.
void matricized_gradient(const QLLayer& layer, Matrix& gQ, Matrix& gW) {
  const auto h = layer.input_dim();
  const Matrix Qt = matricize_layer(layer);
  const Matrix G = Qt * Qt.transpose() - Matrix::Identity(Qt.rows(), Qt.rows());
  const Matrix dQt = 4.0 * G * Qt;
  gQ = Matrix::Zero(layer.Q.rows(), layer.Q.cols());
  gW = Matrix::Zero(layer.W.rows(), layer.W.cols());
  for (Eigen::Index i = 0; i < layer.output_dim(); ++i) {
    const Matrix B = dQt.col(i).reshaped(h, h);
    const Matrix Bs = B + B.transpose();
    for (Eigen::Index j = 0; j < layer.width(); ++j) {
      const auto qj = layer.Q.col(j);
      gW(i, j) += qj.dot(B * qj);
      gQ.col(j) += layer.W(i, j) * (Bs * qj);
    }
  }
}

// --- per-model implementations ------------------------------------------------------

Matrix predict_single(const QLLayer& layer, const Dataset& data) {
  check_input_dim(layer.input_dim(), data, "predict");
  if (!data.is_lifted()) return forward_single_batch(layer, data.inputs());
  Matrix out = quad_features(data, layer.Q) * layer.W.transpose();
  out += trace_feature(data) * layer.alpha.transpose();
  return out;
}

double layer_penalty(const QLLayer& layer, PenaltyMode mode, bool last_layer) {
  switch (mode) {
    case PenaltyMode::Full:
      return penalty_orth(layer.Q);
    case PenaltyMode::PerBlock:
      return penalty_orth_blocks(layer.Q, layer.input_dim());
    case PenaltyMode::Matricized: {
      if (last_layer) return penalty_orth(layer.Q);
      const Matrix Qt = matricize_layer(layer);
      return (Qt * Qt.transpose() - Matrix::Identity(Qt.rows(), Qt.rows())).squaredNorm();
    }
  }
  return 0.0;
}

Gradient grad_single(const QLLayer& layer, const Dataset& data, const ObjectiveConfig& cfg) {
  check_input_dim(layer.input_dim(), data, "grad");
  check_output_dim(layer.output_dim(), data, "grad");
  const Matrix P = quad_features(data, layer.Q);
  const Vector s = trace_feature(data);
  const Matrix R = data.targets() - (P * layer.W.transpose() + s * layer.alpha.transpose());
  const double c = 2.0 / static_cast<double>(data.targets().size());

  LayerGrad g;
  g.W = -c * R.transpose() * P;
  g.alpha = cfg.use_alpha ? Vector(-c * R.transpose() * s) : Vector::Zero(layer.output_dim());
  g.Q = -2.0 * c * weighted_XQ(data, R * layer.W, layer.Q);
  if (cfg.gamma > 0.0) {
    if (cfg.penalty_mode == PenaltyMode::PerBlock)
      g.Q += cfg.gamma * orth_blocks_gradient(layer.Q, layer.input_dim());
    else
      g.Q += cfg.gamma * orth_gradient(layer.Q);
  }
  return {g};
}

Gradient grad_deep(const DeepQLNet& net, const Dataset& data, const ObjectiveConfig& cfg) {
  require_vector_data(data, "grad (deep)");
  check_input_dim(net.input_dim(), data, "grad (deep)");
  check_output_dim(net.output_dim(), data, "grad (deep)");
  const auto L = net.depth();
  std::vector<Matrix> acts{data.inputs()};  // A_0 .. A_L
  std::vector<Matrix> projs, quads;         // P_l = A_{l-1} Q_l, Z_l = P_l^2
  for (const auto& layer : net.layers) {
    projs.push_back(acts.back() * layer.Q);
    quads.push_back(projs.back().array().square().matrix());
    acts.push_back(quads.back() * layer.W.transpose());
  }
  const double c = 2.0 / static_cast<double>(data.targets().size());
  Matrix G = -c * (data.targets() - acts.back());

  Gradient out(L);
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = net.layers[l];
    LayerGrad& g = out[l];
    g.W = G.transpose() * quads[l];
    const Matrix dP = 2.0 * projs[l].cwiseProduct(G * layer.W);
    g.Q = acts[l].transpose() * dP;
    g.alpha = Vector::Zero(layer.output_dim());
    if (l > 0) G = dP * layer.Q.transpose();
  }
  if (cfg.gamma > 0.0) {
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = net.layers[l];
      switch (cfg.penalty_mode) {
        case PenaltyMode::Full:
          out[l].Q += cfg.gamma * orth_gradient(layer.Q);
          break;
        case PenaltyMode::PerBlock:
          out[l].Q += cfg.gamma * orth_blocks_gradient(layer.Q, layer.input_dim());
          break;
        case PenaltyMode::Matricized:
          if (l + 1 == L) {
            out[l].Q += cfg.gamma * orth_gradient(layer.Q);
          } else {
            Matrix gQ, gW;
            matricized_gradient(layer, gQ, gW);
            out[l].Q += cfg.gamma * gQ;
            out[l].W += cfg.gamma * gW;
          }
          break;
      }
    }
  }
  return out;
}

Gradient grad_poly(const PolyLayer& layer, const Dataset& data, const ObjectiveConfig& cfg) {
  require_vector_data(data, "grad (poly)");
  check_input_dim(layer.input_dim(), data, "grad (poly)");
  check_output_dim(1, data, "grad (poly)");
  const int p = layer.degree;
  const Eigen::ArrayXXd A = (data.inputs() * layer.Q).array();
  const Matrix Ap = A.pow(p).matrix();
  const Vector r = data.targets().col(0) - Ap * layer.lambda;
  const double c = 2.0 / static_cast<double>(data.size());
  LayerGrad g;
  g.W = (-c * Ap.transpose() * r).transpose();
  const Matrix coef = ((r * layer.lambda.transpose()).array() * p * A.pow(p - 1)).matrix();
  g.Q = -c * data.inputs().transpose() * coef;
  if (cfg.gamma > 0.0) g.Q += cfg.gamma * hadamard_gradient(layer.Q, p);
  return {g};
}

Jet predict_jet_single(const QLLayer& layer, const Dataset& data, const LayerGrad& dir) {
  Jet P{quad_features(data, layer.Q), 2.0 * bilinear_features(data, dir.Q, layer.Q),
        quad_features(data, dir.Q)};
  Jet pred = P * Jet::linear(layer.W.transpose(), dir.W.transpose());
  const Vector s = trace_feature(data);
  pred.v += s * layer.alpha.transpose();
  pred.d1 += s * dir.alpha.transpose();
  return pred;
}

double curvature_single(const QLLayer& layer, const Dataset& data, const ObjectiveConfig& cfg,
                        const LayerGrad& dir) {
  double c = loss_curvature(predict_jet_single(layer, data, dir), data.targets());
  if (cfg.gamma > 0.0) {
    c += cfg.gamma * (cfg.penalty_mode == PenaltyMode::PerBlock
                          ? orth_blocks_curvature(layer.Q, dir.Q, layer.input_dim())
                          : orth_curvature(layer.Q, dir.Q));
  }
  return c;
}

double curvature_deep(const DeepQLNet& net, const Dataset& data, const ObjectiveConfig& cfg,
                      const Gradient& dir) {
  require_vector_data(data, "second_directional_derivative (deep)");
  Jet a = Jet::constant(data.inputs());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers[l];
    const Jet P = a * Jet::linear(layer.Q, dir[l].Q);
    const Jet Z = hadamard(P, P);
    a = Z * Jet::linear(layer.W.transpose(), dir[l].W.transpose());
  }
  double c = loss_curvature(a, data.targets());
  if (cfg.gamma > 0.0) {
    for (std::size_t l = 0; l < net.depth(); ++l) {
      const auto& layer = net.layers[l];
      const bool last = l + 1 == net.depth();
      switch (cfg.penalty_mode) {
        case PenaltyMode::Full:
          c += cfg.gamma * orth_curvature(layer.Q, dir[l].Q);
          break;
        case PenaltyMode::PerBlock:
          c += cfg.gamma * orth_blocks_curvature(layer.Q, dir[l].Q, layer.input_dim());
          break;
        case PenaltyMode::Matricized:
          if (last) {
            c += cfg.gamma * orth_curvature(layer.Q, dir[l].Q);
          } else {
            const Jet qt = matricize_jet(layer, dir[l].Q, dir[l].W);
            c += cfg.gamma * squared_norm_curvature(minus_identity(qt * qt.transpose()));
          }
          break;
      }
    }
  }
  return c;
}

double curvature_poly(const PolyLayer& layer, const Dataset& data, const ObjectiveConfig& cfg,
                      const LayerGrad& dir) {
  require_vector_data(data, "second_directional_derivative (poly)");
  const Jet A = Jet::constant(data.inputs()) * Jet::linear(layer.Q, dir.Q);
  const Jet pred = power(A, layer.degree) * Jet::linear(layer.lambda, dir.W.transpose());
  double c = loss_curvature(pred, data.targets());
  if (cfg.gamma > 0.0) c += cfg.gamma * hadamard_curvature(layer.Q, dir.Q, layer.degree);
  return c;
}

void check_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string("direction: ") + what + " block has the wrong shape");
}

}  // namespace

void ObjectiveConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("ObjectiveConfig: gamma must be >= 0");
}

double default_gamma(const Dataset& data, double eps) { return data.zero_model_loss() + eps; }

Gradient zeros_like(const AnyModel& model) {
  return std::visit(
      overloaded{
          [](const QLLayer& l) {
            return Gradient{{Matrix::Zero(l.Q.rows(), l.Q.cols()), Matrix::Zero(l.W.rows(), l.W.cols()),
                             Vector::Zero(l.alpha.size())}};
          },
          [](const DeepQLNet& net) {
            Gradient g;
            for (const auto& l : net.layers)
              g.push_back({Matrix::Zero(l.Q.rows(), l.Q.cols()), Matrix::Zero(l.W.rows(), l.W.cols()),
                           Vector::Zero(l.alpha.size())});
            return g;
          },
          [](const PolyLayer& l) {
            return Gradient{{Matrix::Zero(l.Q.rows(), l.Q.cols()), Matrix::Zero(1, l.Q.cols()), Vector()}};
          }},
      model);
}

double squared_norm(const Gradient& g) {
  double s = 0.0;
  for (const auto& l : g) s += l.Q.squaredNorm() + l.W.squaredNorm() + l.alpha.squaredNorm();
  return s;
}

void add_scaled(AnyModel& model, double step, const Gradient& dir) {
  std::visit(overloaded{[&](QLLayer& l) {
                          check_shape(l.Q, dir.at(0).Q, "Q");
                          check_shape(l.W, dir[0].W, "W");
                          l.Q += step * dir[0].Q;
                          l.W += step * dir[0].W;
                          if (dir[0].alpha.size() == l.alpha.size()) l.alpha += step * dir[0].alpha;
                        },
                        [&](DeepQLNet& net) {
                          if (dir.size() != net.depth()) throw ShapeError("direction: layer count mismatch");
                          for (std::size_t i = 0; i < net.depth(); ++i) {
                            check_shape(net.layers[i].Q, dir[i].Q, "Q");
                            check_shape(net.layers[i].W, dir[i].W, "W");
                            net.layers[i].Q += step * dir[i].Q;
                            net.layers[i].W += step * dir[i].W;
                          }
                        },
                        [&](PolyLayer& l) {
                          check_shape(l.Q, dir.at(0).Q, "Q");
                          l.Q += step * dir[0].Q;
                          l.lambda += step * dir[0].W.row(0).transpose();
                        }},
             model);
}

Matrix predict(const AnyModel& model, const Dataset& data) {
  return std::visit(overloaded{[&](const QLLayer& l) { return predict_single(l, data); },
                               [&](const DeepQLNet& net) {
                                 require_vector_data(data, "predict (deep)");
                                 check_input_dim(net.input_dim(), data, "predict (deep)");
                                 return forward_deep_batch(net, data.inputs());
                               },
                               [&](const PolyLayer& l) {
                                 require_vector_data(data, "predict (poly)");
                                 check_input_dim(l.input_dim(), data, "predict (poly)");
                                 return Matrix(forward_poly_batch(l, data.inputs()));
                               }},
                    model);
}

Matrix residuals(const AnyModel& model, const Dataset& data) {
  Matrix pred = predict(model, data);
  if (pred.cols() != data.output_dim())
    throw ShapeError("residuals: model produces " + std::to_string(pred.cols()) + " outputs, data has " +
                     std::to_string(data.output_dim()));
  return data.targets() - pred;
}

double loss_mse(const AnyModel& model, const Dataset& data) {
  if (data.size() < 1) throw ShapeError("loss_mse: empty dataset");
  const Matrix r = residuals(model, data);
  return r.squaredNorm() / static_cast<double>(r.size());
}

double penalty_orth(const Eigen::Ref<const Matrix>& Q) {
  return (Q * Q.transpose() - Matrix::Identity(Q.rows(), Q.rows())).squaredNorm();
}

double penalty_orth_blocks(const Eigen::Ref<const Matrix>& Q, Eigen::Index block) {
  const auto nb = checked_blocks(Q.cols(), block, "penalty_orth_blocks");
  double s = 0.0;
  for (Eigen::Index b = 0; b < nb; ++b) s += penalty_orth(Q.middleCols(b * block, block));
  return s;
}

double penalty_hadamard(const Eigen::Ref<const Matrix>& Q, int p) {
  const Eigen::ArrayXXd G = (Q.transpose() * Q).array().pow(p);
  return (G.matrix() - Matrix::Identity(G.rows(), G.cols())).squaredNorm();
}

Matrix matricize_layer(const QLLayer& layer) {
  const auto h = layer.input_dim();
  Matrix Qt(h * h, layer.output_dim());
  for (Eigen::Index i = 0; i < layer.output_dim(); ++i) {
    const Matrix A = layer.Q * layer.W.row(i).transpose().asDiagonal() * layer.Q.transpose();
    Qt.col(i) = A.reshaped();
  }
  return Qt;
}

double penalty(const AnyModel& model, const ObjectiveConfig& cfg) {
  return std::visit(overloaded{[&](const QLLayer& l) {
                                 return cfg.penalty_mode == PenaltyMode::PerBlock
                                            ? penalty_orth_blocks(l.Q, l.input_dim())
                                            : penalty_orth(l.Q);
                               },
                               [&](const DeepQLNet& net) {
                                 double s = 0.0;
                                 for (std::size_t i = 0; i < net.depth(); ++i)
                                   s += layer_penalty(net.layers[i], cfg.penalty_mode, i + 1 == net.depth());
                                 return s;
                               },
                               [&](const PolyLayer& l) { return penalty_hadamard(l.Q, l.degree); }},
                    model);
}

double objective(const AnyModel& model, const Dataset& data, const ObjectiveConfig& cfg) {
  const double loss = loss_mse(model, data);
  return cfg.gamma > 0.0 ? loss + cfg.gamma * penalty(model, cfg) : loss;
}

Gradient grad(const AnyModel& model, const Dataset& data, const ObjectiveConfig& cfg) {
  return std::visit(overloaded{[&](const QLLayer& l) { return grad_single(l, data, cfg); },
                               [&](const DeepQLNet& net) { return grad_deep(net, data, cfg); },
                               [&](const PolyLayer& l) { return grad_poly(l, data, cfg); }},
                    model);
}

double second_directional_derivative(const AnyModel& model, const Dataset& data, const ObjectiveConfig& cfg,
                                     const Gradient& direction) {
  return std::visit(
      overloaded{[&](const QLLayer& l) {
                   check_input_dim(l.input_dim(), data, "second_directional_derivative");
                   check_output_dim(l.output_dim(), data, "second_directional_derivative");
                   LayerGrad dir = direction.at(0);
                   check_shape(l.Q, dir.Q, "Q");
                   check_shape(l.W, dir.W, "W");
                   if (dir.alpha.size() != l.alpha.size()) dir.alpha = Vector::Zero(l.alpha.size());
                   return curvature_single(l, data, cfg, dir);
                 },
                 [&](const DeepQLNet& net) {
                   if (direction.size() != net.depth()) throw ShapeError("direction: layer count mismatch");
                   check_input_dim(net.input_dim(), data, "second_directional_derivative");
                   check_output_dim(net.output_dim(), data, "second_directional_derivative");
                   for (std::size_t i = 0; i < net.depth(); ++i) {
                     check_shape(net.layers[i].Q, direction[i].Q, "Q");
                     check_shape(net.layers[i].W, direction[i].W, "W");
                   }
                   return curvature_deep(net, data, cfg, direction);
                 },
                 [&](const PolyLayer& l) {
                   check_input_dim(l.input_dim(), data, "second_directional_derivative");
                   check_shape(l.Q, direction.at(0).Q, "Q");
                   if (direction[0].W.size() != l.lambda.size()) throw ShapeError("direction: lambda block mismatch");
                   return curvature_poly(l, data, cfg, direction[0]);
                 }},
      model);
}

double hess_quadform_Q(const QLLayer& layer, const Dataset& data, const ObjectiveConfig& cfg,
                       const Eigen::Ref<const Matrix>& U) {
  if (U.rows() != layer.Q.rows() || U.cols() != layer.Q.cols())
    throw ShapeError("hess_quadform_Q: U must be " + std::to_string(layer.Q.rows()) + "x" +
                     std::to_string(layer.Q.cols()));
  check_input_dim(layer.input_dim(), data, "hess_quadform_Q");
  check_output_dim(layer.output_dim(), data, "hess_quadform_Q");
  LayerGrad dir{U, Matrix::Zero(layer.W.rows(), layer.W.cols()), Vector::Zero(layer.alpha.size())};
  return curvature_single(layer, data, cfg, dir);
}

Matrix residual_matrix(const QLLayer& layer, const Dataset& data, Eigen::Index channel) {
  if (channel < 0 || channel >= layer.output_dim()) throw ShapeError("residual_matrix: channel out of range");
  const Vector r = data.targets().col(channel) - predict_single(layer, data).col(channel);
  if (!data.is_lifted()) {
    const Matrix S = data.inputs().transpose() * r.asDiagonal() * data.inputs();
    return 0.5 * (S + S.transpose());
  }
  Matrix S = Matrix::Zero(data.input_dim(), data.input_dim());
  for (Eigen::Index n = 0; n < data.size(); ++n) S += r(n) * data.lifted_samples()[static_cast<std::size_t>(n)];
  return 0.5 * (S + S.transpose());
}

double loss_mse_general(const Eigen::Ref<const Matrix>& Q, const Eigen::Ref<const Matrix>& M, double alpha,
                        const Dataset& data) {
  check_input_dim(Q.rows(), data, "loss_mse_general");
  if (M.rows() != Q.cols() || M.cols() != Q.cols()) throw ShapeError("loss_mse_general: M must be k x k");
  const Matrix Ms = 0.5 * (M + M.transpose());
  Vector pred(data.size());
  const Vector s = trace_feature(data);
  if (!data.is_lifted()) {
    const Matrix proj = data.inputs() * Q;
    pred = (proj * Ms).cwiseProduct(proj).rowwise().sum();
  } else {
    for (Eigen::Index n = 0; n < data.size(); ++n)
      pred(n) = (Q.transpose() * data.lifted_samples()[static_cast<std::size_t>(n)] * Q).cwiseProduct(Ms).sum();
  }
  pred += alpha * s;
  return (data.targets().col(0) - pred).squaredNorm() / static_cast<double>(data.size());
}

EquivalentPoint equivalence_map(const Eigen::Ref<const Matrix>& M, const Eigen::Ref<const Matrix>& Q) {
  if (M.rows() != M.cols() || M.cols() != Q.cols())
    throw ShapeError("equivalence_map: M must be k x k with k = Q.cols()");
  const EigDecomp e = sym_eig(M);
  return {e.eigenvalues, e.eigenvectors, Q * e.eigenvectors};
}

}  // namespace qlnet
