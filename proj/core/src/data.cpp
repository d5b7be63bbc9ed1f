#include "qlnet/data.hpp"

#include "qlnet/objective.hpp"

#include <string>

namespace qlnet {

Dataset::Dataset(Matrix inputs, Matrix targets, DatasetMeta meta)
    : inputs_(std::move(inputs)), targets_(std::move(targets)), meta_(std::move(meta)) {
  validate();
}

Dataset Dataset::lifted(std::vector<Matrix> X, Matrix targets, DatasetMeta meta) {
  Dataset ds;
  ds.targets_ = std::move(targets);
  ds.lifted_ = std::move(X);
  for (auto& Xn : ds.lifted_) Xn = (0.5 * (Xn + Xn.transpose())).eval();
  ds.meta_ = std::move(meta);
  ds.validate();
  return ds;
}

Eigen::Index Dataset::input_dim() const {
  return is_lifted() ? lifted_.front().rows() : inputs_.cols();
}

Matrix Dataset::sample_matrix(Eigen::Index n) const {
  if (is_lifted()) return lifted_[static_cast<std::size_t>(n)];
  const Vector x = inputs_.row(n).transpose();
  return x * x.transpose();
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const {
  Matrix t(static_cast<Eigen::Index>(idx.size()), targets_.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) t.row(static_cast<Eigen::Index>(i)) = targets_.row(idx[i]);
  if (is_lifted()) {
    std::vector<Matrix> X;
    X.reserve(idx.size());
    for (auto i : idx) X.push_back(lifted_[static_cast<std::size_t>(i)]);
    return lifted(std::move(X), std::move(t), meta_);
  }
  Matrix in(static_cast<Eigen::Index>(idx.size()), inputs_.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) in.row(static_cast<Eigen::Index>(i)) = inputs_.row(idx[i]);
  return Dataset(std::move(in), std::move(t), meta_);
}

void Dataset::validate() const {
  if (targets_.rows() < 1) throw ShapeError("Dataset: need at least one sample");
  if (targets_.cols() < 1) throw ShapeError("Dataset: need at least one output channel");
  if (!targets_.allFinite()) throw ConfigError("Dataset: non-finite targets");
  if (is_lifted()) {
    if (static_cast<Eigen::Index>(lifted_.size()) != targets_.rows())
      throw ShapeError("Dataset: " + std::to_string(lifted_.size()) + " lifted samples for " +
                       std::to_string(targets_.rows()) + " targets");
    const auto d = lifted_.front().rows();
    for (const auto& X : lifted_) {
      if (X.rows() != d || X.cols() != d) throw ShapeError("Dataset: lifted samples must all be d x d");
      if (!X.allFinite()) throw ConfigError("Dataset: non-finite lifted sample");
    }
    return;
  }
  if (inputs_.rows() != targets_.rows())
    throw ShapeError("Dataset: " + std::to_string(inputs_.rows()) + " inputs for " +
                     std::to_string(targets_.rows()) + " targets");
  if (inputs_.cols() < 1) throw ShapeError("Dataset: input dimension must be >= 1");
  if (!inputs_.allFinite()) throw ConfigError("Dataset: non-finite inputs");
}

Matrix gaussian_inputs_with_bias(Eigen::Index d, Eigen::Index N, Rng& rng) {
  if (d < 1 || N < 1) throw ConfigError("generator: need d >= 1 and N >= 1");
  Matrix X = gaussian_matrix(N, d, 1.0, rng);
  X.col(0).setOnes();
  return X;
}

namespace {

Vector quadratic_targets(const Matrix& X, const Matrix& A) {
  return ((X * A).array() * X.array()).rowwise().sum();
}

}  // namespace

Dataset gen_planted_diagonal(Eigen::Index d, Eigen::Index N, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(d, N, rng);
  std::bernoulli_distribution coin(0.5);
  Vector s(d);
  for (Eigen::Index i = 0; i < d; ++i) s(i) = coin(rng) ? 1.0 : -1.0;
  Matrix A = s.asDiagonal();
  Vector y = quadratic_targets(X, A);
  return Dataset(std::move(X), std::move(y), DatasetMeta{"planted-diagonal", seed, A});
}

Dataset gen_planted_diagonal(const Vector& signs, Eigen::Index N, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(signs.size(), N, rng);
  Matrix A = signs.asDiagonal();
  Vector y = quadratic_targets(X, A);
  return Dataset(std::move(X), std::move(y), DatasetMeta{"planted-diagonal", seed, A});
}

Dataset gen_planted_dense(Eigen::Index d, Eigen::Index N, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(d, N, rng);
  const Matrix G = gaussian_matrix(d, d, 1.0, rng);
  Matrix A = 0.5 * (G + G.transpose());
  Vector y = quadratic_targets(X, A);
  return Dataset(std::move(X), std::move(y), DatasetMeta{"planted-dense", seed, A});
}

Dataset gen_planted(const Matrix& A, Eigen::Index N, std::uint64_t seed) {
  if (A.rows() != A.cols()) throw ShapeError("gen_planted: A must be square");
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(A.rows(), N, rng);
  Matrix As = 0.5 * (A + A.transpose());
  Vector y = quadratic_targets(X, As);
  return Dataset(std::move(X), std::move(y), DatasetMeta{"planted", seed, As});
}

Dataset gen_planted_dense_multi(Eigen::Index d, Eigen::Index M, Eigen::Index N, std::uint64_t seed) {
  if (M < 1) throw ConfigError("gen_planted_dense_multi: need M >= 1");
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(d, N, rng);
  Matrix Y(N, M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const Matrix G = gaussian_matrix(d, d, 1.0, rng);
    Y.col(m) = quadratic_targets(X, 0.5 * (G + G.transpose()));
  }
  return Dataset(std::move(X), std::move(Y), DatasetMeta{"planted-dense-multi", seed, std::nullopt});
}

Dataset gen_independent(Eigen::Index d, Eigen::Index N, std::uint64_t seed) {
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(d, N, rng);
  Vector y = gaussian_vector(N, 1.0, rng);
  return Dataset(std::move(X), std::move(y), DatasetMeta{"independent", seed, std::nullopt});
}

Dataset gen_planted_poly(Eigen::Index d, int p, Eigen::Index N, std::uint64_t seed, double noise) {
  if (p < 1) throw ConfigError("gen_planted_poly: degree must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("gen_planted_poly: noise must be >= 0");
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(d, N, rng);
  const auto sets = multisets(static_cast<int>(d), p);
  const Vector c = gaussian_vector(static_cast<Eigen::Index>(sets.size()), 1.0, rng);
  Vector y = Vector::Zero(N);
  for (std::size_t t = 0; t < sets.size(); ++t) {
    Vector mono = Vector::Ones(N);
    for (int i : sets[t]) mono = mono.cwiseProduct(X.col(i));
    y += c(static_cast<Eigen::Index>(t)) * mono;
  }
  if (noise > 0.0) y += gaussian_vector(N, noise, rng);
  return Dataset(std::move(X), std::move(y), DatasetMeta{"planted-poly", seed, std::nullopt});
}

DeepQLNet make_teacher(Eigen::Index d, Eigen::Index h1, std::uint64_t seed) {
  Rng rng(seed);
  const WidthSchedule s = two_layer_schedule(d, h1);
  std::vector<QLLayer> layers;
  for (std::size_t l = 0; l < s.depth(); ++l) {
    const auto fan_in = static_cast<double>(s.h[l]);
    const auto width = static_cast<double>(s.m[l]);
    Matrix Q = gaussian_matrix(s.h[l], s.m[l], 1.0 / std::sqrt(fan_in), rng);
    Matrix W = gaussian_matrix(s.h[l + 1], s.m[l], 1.0 / std::sqrt(width), rng);
    layers.emplace_back(std::move(Q), std::move(W), Vector::Zero(s.h[l + 1]));
  }
  return DeepQLNet(std::move(layers));
}

std::uint64_t deep_teacher_seed(std::uint64_t data_seed) { return derive_seed(data_seed, 0x7eac4e7); }

Dataset gen_deep_planted(Eigen::Index d, Eigen::Index h1, Eigen::Index N, std::uint64_t seed,
                         bool raw_tensor) {
  Rng rng(seed);
  Matrix X = gaussian_inputs_with_bias(d, N, rng);
  if (raw_tensor) {
    const auto sets = multisets(static_cast<int>(d), 4);
    const Vector c = gaussian_vector(static_cast<Eigen::Index>(sets.size()), 1.0, rng);
    Vector y = Vector::Zero(N);
    for (Eigen::Index n = 0; n < N; ++n)
      for (std::size_t t = 0; t < sets.size(); ++t) {
        double mono = 1.0;
        for (int i : sets[t]) mono *= X(n, i);
        y(n) += c(static_cast<Eigen::Index>(t)) * mono;
      }
    return Dataset(std::move(X), std::move(y), DatasetMeta{"deep-raw-tensor", seed, std::nullopt});
  }
  const DeepQLNet teacher = make_teacher(d, h1, deep_teacher_seed(seed));
  Matrix y = forward_deep_batch(teacher, X);
  return Dataset(std::move(X), std::move(y), DatasetMeta{"deep-teacher", seed, std::nullopt});
}

double sign_accuracy(const Eigen::Ref<const Vector>& predictions, const Eigen::Ref<const Vector>& labels) {
  if (predictions.size() != labels.size() || predictions.size() == 0)
    throw ShapeError("sign_accuracy: prediction/label length mismatch");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const bool p = predictions(i) >= 0.0;
    const bool l = labels(i) >= 0.0;
    hits += (p == l) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double classify_sign(const AnyModel& model, const Dataset& data) {
  const Matrix pred = predict(model, data);
  return sign_accuracy(pred.col(0), data.targets().col(0));
}

}  // namespace qlnet
