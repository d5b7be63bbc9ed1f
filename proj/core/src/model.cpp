#include "qlnet/model.hpp"

#include <limits>
#include <string>

namespace qlnet {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

QLLayer::QLLayer(Matrix q, Matrix w, Vector a) : Q(std::move(q)), W(std::move(w)), alpha(std::move(a)) {
  validate();
}

QLLayer QLLayer::scalar(const Matrix& q, const Vector& lambda, double a) {
  Vector alpha(1);
  alpha(0) = a;
  return QLLayer(q, lambda.transpose(), alpha);
}

Matrix QLLayer::coefficient_matrix(Eigen::Index m) const {
  Matrix A = Q * W.row(m).transpose().asDiagonal() * Q.transpose();
  A.diagonal().array() += alpha(m);
  return A;
}

void QLLayer::validate() const {
  if (W.rows() < 1) throw ShapeError("QLLayer: output dimension must be >= 1");
  if (W.cols() != Q.cols())
    throw ShapeError("QLLayer: W is " + dims(W) + " but Q is " + dims(Q));
  if (alpha.size() != W.rows())
    throw ShapeError("QLLayer: alpha has " + std::to_string(alpha.size()) + " entries for " +
                     std::to_string(W.rows()) + " outputs");
  if (!Q.allFinite() || !W.allFinite() || !alpha.allFinite())
    throw ConfigError("QLLayer: non-finite weights");
}

WidthSchedule overparam_width_schedule(Eigen::Index d, std::size_t depth) {
  if (d < 1 || depth < 1) throw ConfigError("overparam_width_schedule: need d >= 1 and depth >= 1");
  WidthSchedule s;
  s.h.resize(depth + 1);
  s.h[0] = d;
  for (std::size_t l = 1; l <= depth; ++l) {
    // h_l = d^(2^(L-l))
    Eigen::Index h = d;
    for (std::size_t t = 0; t + 1 < (std::size_t{1} << (depth - l)); ++t) h *= d;
    s.h[l] = depth == l ? 1 : h;
  }
  // With h_L forced to 1 the chain still follows h_l = d^(2^(L-l)) for l < L.
  for (std::size_t l = 1; l <= depth; ++l) s.m.push_back(s.h[l - 1] * s.h[l]);
  return s;
}

WidthSchedule two_layer_schedule(Eigen::Index d, Eigen::Index h1) {
  if (d < 1 || h1 < 1) throw ConfigError("two_layer_schedule: need d >= 1 and h1 >= 1");
  return WidthSchedule{{d, h1, 1}, {d * h1, h1}};
}

DeepQLNet::DeepQLNet(std::vector<QLLayer> ls) : layers(std::move(ls)) { validate(); }

WidthSchedule DeepQLNet::schedule() const {
  WidthSchedule s;
  s.h.push_back(input_dim());
  for (const auto& l : layers) {
    s.h.push_back(l.output_dim());
    s.m.push_back(l.width());
  }
  return s;
}

DeepQLNet DeepQLNet::zeros(const WidthSchedule& s) {
  if (s.h.size() != s.m.size() + 1 || s.m.empty())
    throw ShapeError("DeepQLNet::zeros: schedule needs h of length depth+1");
  std::vector<QLLayer> ls;
  for (std::size_t l = 0; l < s.m.size(); ++l)
    ls.emplace_back(Matrix::Zero(s.h[l], s.m[l]), Matrix::Zero(s.h[l + 1], s.m[l]),
                    Vector::Zero(s.h[l + 1]));
  return DeepQLNet(std::move(ls));
}

void DeepQLNet::validate() const {
  if (layers.empty()) throw ShapeError("DeepQLNet: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].validate();
    if (l > 0 && layers[l].input_dim() != layers[l - 1].output_dim())
      throw ShapeError("DeepQLNet: layer " + std::to_string(l) + " takes " +
                       std::to_string(layers[l].input_dim()) + " inputs but layer " +
                       std::to_string(l - 1) + " produces " +
                       std::to_string(layers[l - 1].output_dim()));
  }
}

PolyLayer::PolyLayer(int p, Matrix q, Vector l) : degree(p), Q(std::move(q)), lambda(std::move(l)) {
  validate();
}

void PolyLayer::validate() const {
  if (degree < 2) throw ConfigError("PolyLayer: degree must be >= 2");
  if (lambda.size() != Q.cols())
    throw ShapeError("PolyLayer: lambda has " + std::to_string(lambda.size()) + " entries but Q is " +
                     dims(Q));
  if (!Q.allFinite() || !lambda.allFinite()) throw ConfigError("PolyLayer: non-finite weights");
}

Vector forward_single(const QLLayer& layer, const Eigen::Ref<const Vector>& x) {
  if (x.size() != layer.input_dim())
    throw ShapeError("forward_single: input has " + std::to_string(x.size()) + " entries, layer expects " +
                     std::to_string(layer.input_dim()));
  const Vector proj = (layer.Q.transpose() * x).array().square();
  return layer.W * proj + layer.alpha * x.squaredNorm();
}

Matrix forward_single_batch(const QLLayer& layer, const Eigen::Ref<const Matrix>& X) {
  if (X.cols() != layer.input_dim())
    throw ShapeError("forward_single_batch: inputs have " + std::to_string(X.cols()) +
                     " columns, layer expects " + std::to_string(layer.input_dim()));
  const Matrix proj = (X * layer.Q).array().square();
  Matrix out = proj * layer.W.transpose();
  out += X.rowwise().squaredNorm() * layer.alpha.transpose();
  return out;
}

Vector forward_deep(const DeepQLNet& net, const Eigen::Ref<const Vector>& x) {
  if (x.size() != net.input_dim())
    throw ShapeError("forward_deep: input has " + std::to_string(x.size()) + " entries, network expects " +
                     std::to_string(net.input_dim()));
  Vector a = x;
  for (const auto& layer : net.layers) {
    const Vector z = (layer.Q.transpose() * a).array().square();
    a = layer.W * z;
  }
  return a;
}

Matrix forward_deep_batch(const DeepQLNet& net, const Eigen::Ref<const Matrix>& X) {
  if (X.cols() != net.input_dim())
    throw ShapeError("forward_deep_batch: inputs have " + std::to_string(X.cols()) +
                     " columns, network expects " + std::to_string(net.input_dim()));
  Matrix a = X;
  for (const auto& layer : net.layers) {
    const Matrix z = (a * layer.Q).array().square();
    a = z * layer.W.transpose();
  }
  return a;
}

double forward_poly(const PolyLayer& layer, const Eigen::Ref<const Vector>& x) {
  if (x.size() != layer.input_dim())
    throw ShapeError("forward_poly: input has " + std::to_string(x.size()) + " entries, layer expects " +
                     std::to_string(layer.input_dim()));
  const Vector proj = layer.Q.transpose() * x;
  return proj.array().pow(layer.degree).matrix().dot(layer.lambda);
}

Vector forward_poly_batch(const PolyLayer& layer, const Eigen::Ref<const Matrix>& X) {
  if (X.cols() != layer.input_dim())
    throw ShapeError("forward_poly_batch: inputs have " + std::to_string(X.cols()) +
                     " columns, layer expects " + std::to_string(layer.input_dim()));
  const Matrix proj = (X * layer.Q).array().pow(layer.degree);
  return proj * layer.lambda;
}

std::uint64_t multiset_count(std::uint64_t d, std::uint64_t p) {
  // C(d+p-1, p) computed incrementally; each partial product is an exact binomial.
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= p; ++i) {
    const std::uint64_t num = d - 1 + i;
    if (c > std::numeric_limits<std::uint64_t>::max() / num)
      throw ConfigError("multiset_count: overflow for d=" + std::to_string(d) + " p=" + std::to_string(p));
    c = c * num / i;
  }
  return c;
}

std::vector<std::vector<int>> multisets(int d, int p) {
  if (d < 1 || p < 0) throw ConfigError("multisets: need d >= 1 and p >= 0");
  std::vector<std::vector<int>> out;
  out.reserve(multiset_count(d, p));
  std::vector<int> cur(p, 0);
  while (true) {
    out.push_back(cur);
    int i = p - 1;
    while (i >= 0 && cur[i] == d - 1) --i;
    if (i < 0) break;
    ++cur[i];
    for (int j = i + 1; j < p; ++j) cur[j] = cur[i];
  }
  return out;
}

Matrix poly_basis_init(int d, int p) {
  if (d < 1 || p < 2) throw ConfigError("poly_basis_init: need d >= 1 and p >= 2");
  const auto sets = multisets(d, p);
  Matrix Q = Matrix::Zero(d, static_cast<Eigen::Index>(sets.size()));
  for (std::size_t c = 0; c < sets.size(); ++c)
    for (int i : sets[c]) Q(i, static_cast<Eigen::Index>(c)) += 1.0;
  return Q;
}

}  // namespace qlnet
