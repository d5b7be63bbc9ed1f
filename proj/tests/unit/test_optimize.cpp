#include "check_util.hpp"
#include "qlnet/harness.hpp"
#include "qlnet/optimize.hpp"
#include "qlnet/oracle.hpp"

#include <Eigen/SVD>
#include <gtest/gtest.h>

using namespace qlnet;

TEST(Train, PenaltyVariantFromIdentityReachesOracleNmse) {
  const Dataset data = gen_planted_diagonal(10, 1500, 1);
  ObjectiveConfig obj;
  obj.gamma = default_gamma(data);
  TrainConfig cfg;
  cfg.trace_stride = 1000;
  const TrainTrace tr = train(init_identity(10, 10), data, obj, cfg);
  EXPECT_FALSE(tr.diverged);
  EXPECT_LE(nmse(tr.model, data), 0.005);
}

TEST(Train, ZeroTargetsStayAtZero) {
  const Dataset base = gen_independent(3, 20, 2);
  const Dataset data(base.inputs(), Vector::Zero(20));
  TrainConfig cfg;
  cfg.max_epochs = 200;
  const TrainTrace tr = train(QLLayer::scalar(Matrix::Zero(3, 3), Vector::Zero(3)), data, {}, cfg);
  for (const auto& p : tr.points) EXPECT_EQ(p.loss, 0.0);
  EXPECT_EQ(tr.final_loss, 0.0);
}

TEST(Train, GradientDescentSmallInstanceReachesOracle) {
  const Dataset data = gen_independent(2, 5, 3);
  const OracleSolution orc = solve_oracle(data, 2, true);
  ObjectiveConfig obj;
  obj.use_alpha = true;
  TrainConfig cfg;
  cfg.optimizer = Optimizer::GD;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 400000;
  cfg.trace_stride = 10000;
  cfg.grad_tol = 1e-10;
  const TrainTrace tr = train(init_random_gaussian(2, 2, 1, 4, -1.0, 0.1), data, obj, cfg);
  EXPECT_LE(std::abs(tr.final_loss - orc.loss_star), 1e-6);
}

TEST(Train, FullBatchGdIsMonotone) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset data = gen_planted_dense(4, 50, seed);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::GD;
    cfg.learning_rate = 1e-4;
    cfg.max_epochs = 10000;
    cfg.grad_tol = 1e-300;
    const TrainTrace tr = train(init_random_gaussian(4, 4, 1, seed), data, {}, cfg);
    for (std::size_t i = 1; i < tr.points.size(); ++i)
      ASSERT_LE(tr.points[i].loss, tr.points[i - 1].loss * (1.0 + 1e-14)) << "epoch " << tr.points[i].epoch;
  }
}

TEST(Train, Deterministic) {
  const Dataset data = gen_planted_dense(3, 40, 5);
  for (Optimizer o : {Optimizer::GD, Optimizer::SGD, Optimizer::Adam}) {
    TrainConfig cfg;
    cfg.optimizer = o;
    cfg.max_epochs = 300;
    cfg.batch_size = 16;
    cfg.seed = 9;
    const TrainTrace a = train(init_random_gaussian(3, 3, 1, 1), data, {}, cfg);
    const TrainTrace b = train(init_random_gaussian(3, 3, 1, 1), data, {}, cfg);
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      EXPECT_EQ(a.points[i].loss, b.points[i].loss);
      EXPECT_EQ(a.points[i].grad_norm, b.points[i].grad_norm);
    }
    EXPECT_EQ(std::get<QLLayer>(a.model).Q, std::get<QLLayer>(b.model).Q);
  }
}

TEST(Train, PenaltyKeepsQWellConditionedAlongGd) {
  // Trajectory checkpoints by chaining GD runs (GD is stateless, so chaining is exact).
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Dataset data = gen_planted_dense(5, 200, seed);
    ObjectiveConfig obj;
    obj.gamma = default_gamma(data);
    TrainConfig cfg;
    cfg.optimizer = Optimizer::GD;
    cfg.learning_rate = 2e-4;
    cfg.max_epochs = 250;
    cfg.trace_stride = 250;
    AnyModel m = init_identity(5, 5);
    double worst = 1.0;
    for (int chunk = 0; chunk < 8; ++chunk) {
      m = train(m, data, obj, cfg).model;
      const Eigen::JacobiSVD<Matrix> svd(std::get<QLLayer>(m).Q);
      worst = std::min(worst, svd.singularValues().minCoeff());
    }
    EXPECT_GE(worst, 0.1) << "seed " << seed;
  }
}

TEST(Train, DivergenceIsFlaggedNotThrown) {
  const Dataset data = gen_planted_dense(4, 50, 6);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::GD;
  cfg.learning_rate = 10.0;
  cfg.max_epochs = 1000;
  const TrainTrace tr = train(init_random_gaussian(4, 4, 1, 1, 1.0, 1.0), data, {}, cfg);
  EXPECT_TRUE(tr.diverged);
  EXPECT_FALSE(tr.divergence_reason.empty());
  EXPECT_LT(tr.epochs_used, 1000);
}

TEST(Train, FrozenGroupsDoNotMove) {
  const Dataset data = gen_planted_dense(3, 30, 7);
  const QLLayer init = init_random_gaussian(3, 3, 1, 2);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.train_Q = false;
  const TrainTrace tr = train(init, data, {}, cfg);
  EXPECT_EQ(std::get<QLLayer>(tr.model).Q, init.Q);
  EXPECT_NE(std::get<QLLayer>(tr.model).W, init.W);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.grad_tol = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lr_Q = -1e-3;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
  EXPECT_EQ(parse_optimizer(to_string(Optimizer::SGD)), Optimizer::SGD);
}

TEST(GdStep, ZeroGradientLeavesModel) {
  AnyModel m = check::random_layer(3, 4, 1, 1);
  const AnyModel before = m;
  gd_step(m, zeros_like(m), {0.1, 0.1, 0.1});
  EXPECT_EQ(std::get<QLLayer>(m).Q, std::get<QLLayer>(before).Q);
  EXPECT_EQ(std::get<QLLayer>(m).W, std::get<QLLayer>(before).W);
}

TEST(GdStep, GroupRatesApplied) {
  const Dataset data = gen_independent(3, 20, 2);
  const QLLayer l = check::random_layer(3, 4, 1, 2);
  ObjectiveConfig obj;
  obj.use_alpha = true;
  const Gradient g = grad(l, data, obj);
  AnyModel m = l;
  gd_step(m, g, {0.01, 0.02, 0.03});
  const QLLayer& r = std::get<QLLayer>(m);
  EXPECT_EQ(r.Q, Matrix(l.Q - 0.01 * g[0].Q));
  EXPECT_EQ(r.W, Matrix(l.W - 0.02 * g[0].W));
  EXPECT_EQ(r.alpha, Vector(l.alpha - 0.03 * g[0].alpha));
  // A second, element-wise computation of the same update.
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(r.Q(i, j), l.Q(i, j) - 0.01 * g[0].Q(i, j));
}

TEST(ScaledTrajectory, IdentityScaleIsExact) {
  const Dataset data = gen_planted_dense(3, 30, 1);
  EXPECT_EQ(scaled_trajectory_check(init_random_gaussian(3, 3, 1, 1, -1.0, 0.1), data, 1.0, 1e-3, 1e-3, 100), 0.0);
}

TEST(ScaledTrajectory, ScaleTwoAndTenth) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset data = gen_planted_dense(3, 30, seed);
    const QLLayer m0 = init_random_gaussian(3, 3, 1, seed, -1.0, 0.1);
    EXPECT_LE(scaled_trajectory_check(m0, data, 2.0, 1e-3, 1e-3, 100), 1e-8);
    EXPECT_LE(scaled_trajectory_check(m0, data, 0.5, 1e-3, 1e-3, 100), 1e-8);
    EXPECT_LE(scaled_trajectory_check(m0, data, 0.1, 1e-3, 1e-3, 100), 1e-6);
    EXPECT_LE(scaled_trajectory_check(m0, data, 0.3, 1e-3, 1e-3, 100), 1e-8);
  }
}

TEST(Inits, IdentityAndBlockIdentity) {
  const QLLayer a = init_identity(3, 5);
  Matrix Q = Matrix::Zero(3, 5);
  Q.leftCols(3).setIdentity();
  EXPECT_EQ(a.Q, Q);
  EXPECT_TRUE(a.W.isZero());
  const QLLayer b = init_block_identity(2, 3);
  Matrix Qb(2, 6);
  Qb << 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1;
  EXPECT_EQ(b.Q, Qb);
  EXPECT_EQ(b.output_dim(), 3);
}

TEST(Inits, RandomGaussianScales) {
  const QLLayer l = init_random_gaussian(50, 200, 1, 3);
  EXPECT_NEAR(l.Q.squaredNorm() / l.Q.size(), 1.0 / 50.0, 0.1 / 50.0);
  EXPECT_NEAR(std::sqrt(l.W.squaredNorm() / l.W.size()), 0.01, 0.002);
  EXPECT_TRUE(l.alpha.isZero());
  EXPECT_EQ(init_random_gaussian(3, 3, 1, 4).Q, init_random_gaussian(3, 3, 1, 4).Q);
}

TEST(Inits, PolyBasisAndDeep) {
  const PolyLayer p = init_poly_basis(2, 3);
  EXPECT_EQ(p.Q, poly_basis_init(2, 3));
  EXPECT_TRUE(p.lambda.isZero());
  const DeepQLNet net = init_deep(two_layer_schedule(2, 3), 1);
  EXPECT_EQ(net.layers[0].Q.cols(), 6);
  for (Eigen::Index c = 0; c < 6; ++c) EXPECT_EQ(net.layers[0].Q(c % 2, c), 1.0);
  EXPECT_EQ(net.layers[0].Q.sum(), 6.0);
}
