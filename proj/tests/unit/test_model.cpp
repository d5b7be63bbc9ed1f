#include "check_util.hpp"
#include "qlnet/model.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace qlnet;

TEST(ForwardSingle, TwoNeuronArithmetic) {
  const QLLayer l = QLLayer::scalar(Matrix::Identity(2, 2), Vector::Map(std::vector<double>{1.0, -1.0}.data(), 2), 0.0);
  EXPECT_DOUBLE_EQ(forward_single(l, Eigen::Vector2d(1, 2))(0), -3.0);
}

TEST(ForwardSingle, NormRegressorOnly) {
  const QLLayer l = QLLayer::scalar(Matrix::Zero(2, 2), Vector::Zero(2), 1.0);
  EXPECT_DOUBLE_EQ(forward_single(l, Eigen::Vector2d(3, 4))(0), 25.0);
}

TEST(ForwardSingle, MatchesAssembledCoefficientMatrix) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const QLLayer l = check::random_layer(5, 7, 3, seed);
    Rng rng(seed + 100);
    const Vector x = gaussian_vector(5, 1.0, rng);
    const Vector out = forward_single(l, x);
    for (Eigen::Index m = 0; m < 3; ++m) {
      Matrix A = l.alpha(m) * Matrix::Identity(5, 5);
      for (Eigen::Index j = 0; j < 7; ++j) A += l.W(m, j) * l.Q.col(j) * l.Q.col(j).transpose();
      const double ref = A.cwiseProduct(x * x.transpose()).sum();
      EXPECT_NEAR(out(m), ref, 1e-12 * (1.0 + std::abs(ref)));
    }
  }
}

TEST(ForwardSingle, BatchMatchesPerRow) {
  const QLLayer l = check::random_layer(4, 6, 2, 3);
  Rng rng(9);
  const Matrix X = gaussian_matrix(10, 4, 1.0, rng);
  const Matrix out = forward_single_batch(l, X);
  for (Eigen::Index n = 0; n < 10; ++n) EXPECT_LT((out.row(n).transpose() - forward_single(l, X.row(n).transpose())).norm(), 1e-12);
}

TEST(ForwardSingle, DimensionMismatchThrows) {
  const QLLayer l = check::random_layer(3, 3, 1, 0);
  EXPECT_THROW(forward_single(l, Vector::Ones(4)), ShapeError);
}

TEST(ForwardSingle, PermutationSymmetry) {
  const QLLayer l = check::random_layer(4, 5, 2, 1);
  Eigen::PermutationMatrix<Eigen::Dynamic> P(5);
  P.indices() << 3, 0, 4, 1, 2;
  const QLLayer lp(l.Q * P, l.W * P, l.alpha);
  Rng rng(2);
  const Vector x = gaussian_vector(4, 1.0, rng);
  EXPECT_LT((forward_single(l, x) - forward_single(lp, x)).norm(), 1e-12);
}

TEST(ForwardSingle, ScalingSymmetry) {
  const QLLayer l = check::random_layer(4, 5, 1, 4);
  Rng rng(5);
  const Vector x = gaussian_vector(4, 1.0, rng);
  for (double beta : {0.5, 2.0, -3.0, 10.0}) {
    const QLLayer s(l.Q / beta, beta * beta * l.W, l.alpha);
    EXPECT_NEAR(forward_single(l, x)(0), forward_single(s, x)(0), 1e-12 * (1.0 + std::abs(forward_single(l, x)(0))));
  }
}

TEST(ForwardSingle, ZeroLambdaColumnDeletion) {
  QLLayer l = check::random_layer(3, 4, 1, 6);
  l.W(0, 2) = 0.0;
  Matrix Q(3, 3);
  Q << l.Q.col(0), l.Q.col(1), l.Q.col(3);
  Matrix W(1, 3);
  W << l.W(0, 0), l.W(0, 1), l.W(0, 3);
  const QLLayer r(Q, W, l.alpha);
  const Vector x = Eigen::Vector3d(0.3, -1.2, 2.0);
  EXPECT_NEAR(forward_single(l, x)(0), forward_single(r, x)(0), 1e-12);
}

TEST(QLLayerValidate, RejectsBadShapesAndValues) {
  EXPECT_THROW(QLLayer(Matrix::Zero(3, 2), Matrix::Zero(1, 3), Vector::Zero(1)), ShapeError);
  EXPECT_THROW(QLLayer(Matrix::Zero(3, 2), Matrix::Zero(2, 2), Vector::Zero(1)), ShapeError);
  Matrix Q = Matrix::Zero(2, 2);
  Q(0, 0) = std::nan("");
  EXPECT_ANY_THROW(QLLayer(Q, Matrix::Zero(1, 2), Vector::Zero(1)));
}

TEST(ForwardDeep, SingleLayerReduction) {
  const QLLayer l = check::random_layer(3, 4, 1, 7);
  const QLLayer l0(l.Q, l.W, Vector::Zero(1));
  const DeepQLNet net({l0});
  const Vector x = Eigen::Vector3d(1.0, 0.5, -2.0);
  EXPECT_NEAR(forward_deep(net, x)(0), forward_single(l0, x)(0), 1e-12);
}

TEST(ForwardDeep, ZeroWeights) {
  const DeepQLNet net = DeepQLNet::zeros(two_layer_schedule(3, 4));
  EXPECT_EQ(forward_deep(net, Eigen::Vector3d(1, 2, 3))(0), 0.0);
}

TEST(ForwardDeep, MatchesDegreeFourTensorContraction) {
  for (Eigen::Index d : {2, 3}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const DeepQLNet net = check::random_deep(d, 3, seed);
      Rng rng(seed + 50);
      const Vector x = gaussian_vector(d, 1.0, rng);
      const double ref = check::deep2_tensor_output(net, x);
      EXPECT_NEAR(forward_deep(net, x)(0), ref, 1e-10 * (1.0 + std::abs(ref)));
    }
  }
}

TEST(ForwardDeep, BrokenChainThrows) {
  std::vector<QLLayer> ls{QLLayer(Matrix::Zero(2, 4), Matrix::Zero(3, 4), Vector::Zero(3)),
                          QLLayer(Matrix::Zero(2, 2), Matrix::Zero(1, 2), Vector::Zero(1))};
  EXPECT_THROW(DeepQLNet{ls}, ShapeError);
}

TEST(WidthSchedules, TwoLayerAndOverparameterized) {
  const WidthSchedule s = two_layer_schedule(4, 7);
  EXPECT_EQ(s.h, (std::vector<Eigen::Index>{4, 7, 1}));
  EXPECT_EQ(s.m, (std::vector<Eigen::Index>{28, 7}));
  const WidthSchedule t = overparam_width_schedule(2, 2);
  EXPECT_EQ(t.h, (std::vector<Eigen::Index>{2, 4, 1}));
  EXPECT_EQ(t.m, (std::vector<Eigen::Index>{8, 4}));
}

TEST(ForwardPoly, DegreeTwoMatchesSingle) {
  const QLLayer l = check::random_layer(3, 4, 1, 8);
  const PolyLayer p(2, l.Q, l.lambda());
  const QLLayer l0(l.Q, l.W, Vector::Zero(1));
  const Vector x = Eigen::Vector3d(0.1, -0.7, 1.3);
  EXPECT_NEAR(forward_poly(p, x), forward_single(l0, x)(0), 1e-12);
}

TEST(ForwardPoly, CubicArithmetic) {
  const PolyLayer p(3, Eigen::Vector2d(1, 1), Vector::Ones(1));
  EXPECT_DOUBLE_EQ(forward_poly(p, Eigen::Vector2d(1, 2)), 27.0);
}

TEST(ForwardPoly, MatchesTensorContraction) {
  for (int p : {3, 4}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const PolyLayer l = check::random_poly(3, p, 5, seed);
      Rng rng(seed + 7);
      const Vector x = gaussian_vector(3, 1.0, rng);
      const double ref = check::poly_tensor_output(l.Q, l.lambda, p, x);
      EXPECT_NEAR(forward_poly(l, x), ref, 1e-10 * (1.0 + std::abs(ref)));
    }
  }
}

TEST(ForwardPoly, InvalidDegreeThrows) { EXPECT_ANY_THROW(PolyLayer(1, Matrix::Zero(2, 1), Vector::Zero(1))); }

TEST(PolyBasis, TwoByThree) {
  const Matrix B = poly_basis_init(2, 3);
  Matrix ref(2, 4);
  ref << 3, 2, 1, 0, 0, 1, 2, 3;
  EXPECT_EQ(B, ref);
  EXPECT_EQ(multiset_count(2, 3), 4u);
}

TEST(PolyBasis, TwoByTwo) {
  Matrix ref(2, 3);
  ref << 2, 1, 0, 0, 1, 2;
  EXPECT_EQ(poly_basis_init(2, 2), ref);
}

TEST(PolyBasis, CountsAndDistinctColumns) {
  EXPECT_EQ(poly_basis_init(3, 2).cols(), 6);
  for (int d = 1; d <= 4; ++d)
    for (int p = 2; p <= 4; ++p) {
      const Matrix B = poly_basis_init(d, p);
      EXPECT_EQ(static_cast<std::uint64_t>(B.cols()), multiset_count(d, p));
      std::set<std::vector<double>> cols;
      for (Eigen::Index j = 0; j < B.cols(); ++j) {
        cols.insert(std::vector<double>(B.col(j).data(), B.col(j).data() + d));
        EXPECT_DOUBLE_EQ(B.col(j).sum(), p);
      }
      EXPECT_EQ(cols.size(), static_cast<std::size_t>(B.cols()));
    }
}

TEST(PolyBasis, MultisetsLexicographic) {
  const auto m = multisets(3, 2);
  const std::vector<std::vector<int>> ref{{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
  EXPECT_EQ(m, ref);
}
