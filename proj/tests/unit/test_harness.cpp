#include "check_util.hpp"
#include "qlnet/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qlnet;

namespace {

SweepConfig tiny_sweep() {
  SweepConfig c;
  c.d = 3;
  c.N = 40;
  c.cells = {1, 2, 3};
  c.trials = 2;
  c.blocks = 2;
  c.seed = 5;
  c.train.max_epochs = 400;
  c.train.trace_stride = 100;
  return c;
}

}  // namespace

TEST(Nmse, Examples) {
  const Dataset data = gen_planted_dense(3, 30, 1);
  EXPECT_NEAR(nmse(closed_form_solver(data), data), 0.0, 1e-20);
  EXPECT_DOUBLE_EQ(nmse(QLLayer::scalar(Matrix::Zero(3, 3), Vector::Zero(3)), data), 1.0);
  // Predicting half of every target leaves a quarter of the energy.
  const EigDecomp e = sym_eig(*data.meta().planted_A);
  const QLLayer half_rot = QLLayer::scalar(e.eigenvectors, 0.5 * e.eigenvalues);
  EXPECT_NEAR(nmse(half_rot, data), 0.25, 1e-12);
  const Dataset zeros(data.inputs(), Vector::Zero(30));
  EXPECT_THROW(nmse(half_rot, zeros), ConfigError);
}

TEST(SweepConfigJson, RoundTrip) {
  SweepConfig c = tiny_sweep();
  c.variant = Variant::AddedNorm;
  c.data = DataKind::PlantedDense;
  c.gamma = 0.25;
  c.train.optimizer = Optimizer::SGD;
  c.train.batch_size = 8;
  c.init_lambda_scale = 0.05;
  const nlohmann::json j = sweep_config_to_json(c);
  const SweepConfig r = sweep_config_from_json(j);
  EXPECT_EQ(sweep_config_to_json(r), j);
  EXPECT_EQ(r.cells, c.cells);
  EXPECT_EQ(r.variant, Variant::AddedNorm);
  EXPECT_EQ(*r.gamma, 0.25);
  EXPECT_EQ(r.train.optimizer, Optimizer::SGD);
}

TEST(SweepConfigJson, StrictKeysAndValues) {
  EXPECT_THROW(sweep_config_from_json({{"trails", 3}}), ConfigError);
  EXPECT_THROW(sweep_config_from_json({{"train", {{"lr", 0.1}}}}), ConfigError);
  EXPECT_THROW(sweep_config_from_json({{"variant", "fancy"}}), ConfigError);
  EXPECT_THROW(sweep_config_from_json({{"d", "ten"}}), ConfigError);
  EXPECT_THROW(sweep_config_from_json({{"cell_range", {5, 1}}}), ConfigError);
  const SweepConfig c = sweep_config_from_json({{"cell_range", {2, 5}}});
  EXPECT_EQ(c.cells, (std::vector<Eigen::Index>{2, 3, 4, 5}));
}

TEST(SweepConfigJson, ZeroTrialsIsAValidationError) {
  SweepConfig c = sweep_config_from_json({{"trials", 0}, {"cells", {1}}});
  EXPECT_THROW(c.validate(), ConfigError);
  c.trials = 1;
  EXPECT_NO_THROW(c.validate());
  c.cells.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_sweep();
  c.data = DataKind::DeepTeacher;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(run_sweep(c), ConfigError);
}

TEST(OtherConfigJson, StrictReaders) {
  EXPECT_THROW(mnist_config_from_json({{"h1", {3}}}), ConfigError);
  EXPECT_EQ(mnist_config_from_json({{"h1s", {3, 4}}}).h1s, (std::vector<Eigen::Index>{3, 4}));
  EXPECT_THROW(example1_options_from_json({{"radius", "big"}}), ConfigError);
  EXPECT_EQ(example1_options_from_json({{"N", 12}}).N, 12);
  EXPECT_THROW(poly_options_from_json({{"degree", 3}}), ConfigError);
  EXPECT_EQ(poly_options_from_json({{"p", 4}}).p, 4);
  const TrainConfig t = train_config_from_json({{"optimizer", "gd"}, {"max_epochs", 7}});
  EXPECT_EQ(t.optimizer, Optimizer::GD);
  EXPECT_EQ(t.max_epochs, 7);
  EXPECT_EQ(train_config_to_json(train_config_from_json(train_config_to_json(t))), train_config_to_json(t));
}

TEST(FastMode, CapsEpochs) {
  SweepConfig c;
  c.train.max_epochs = 100000;
  apply_fast_mode(c);
  EXPECT_EQ(c.train.max_epochs, 5000);
}

TEST(Sweep, DeterministicCsvAcrossRunsAndWorkers) {
  SweepConfig c = tiny_sweep();
  const std::string a = sweep_csv(run_sweep(c));
  const std::string b = sweep_csv(run_sweep(c));
  EXPECT_EQ(a, b);
  c.workers = 3;
  EXPECT_EQ(sweep_csv(run_sweep(c)), a);
  c.seed = 6;
  EXPECT_NE(sweep_csv(run_sweep(c)), a);
}

TEST(Sweep, CsvLayoutAndSummary) {
  SweepConfig c = tiny_sweep();
  const SweepReport r = run_sweep(c);
  std::istringstream in(sweep_csv(r));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "experiment,variant,cell,block,trials,avg_nmse,frac_global,nmse_star,threshold_marker");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
  }
  EXPECT_EQ(rows, 3 * 2);
  EXPECT_EQ(r.trials.size(), 3u * 2u * 2u);
  EXPECT_EQ(r.threshold_marker, 3);
  const nlohmann::json s = r.summary();
  EXPECT_EQ(s.at("cells").size(), 3u);
  EXPECT_EQ(s.at("threshold_marker"), 3);

  const auto dir = std::filesystem::temp_directory_path() / "qlnet_test_sweep";
  std::filesystem::remove_all(dir);
  write_sweep_outputs(r, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "results.csv"));
  std::ifstream sj(dir / "summary.json");
  const nlohmann::json parsed = nlohmann::json::parse(sj);
  EXPECT_EQ(parsed.at("trials").size(), 12u);
}

TEST(Sweep, AveragesMatchTrials) {
  const SweepReport r = run_sweep(tiny_sweep());
  for (const auto& row : r.rows) {
    double sum = 0.0;
    int n = 0, hits = 0;
    for (const auto& t : r.trials)
      if (t.cell == row.cell && t.block == row.block) {
        sum += t.nmse;
        hits += t.achieved_global ? 1 : 0;
        ++n;
      }
    ASSERT_EQ(n, row.trials);
    EXPECT_NEAR(row.avg_nmse, sum / n, 1e-15);
    EXPECT_DOUBLE_EQ(row.frac_global, static_cast<double>(hits) / n);
  }
}

TEST(Sweep, ThresholdMarkers) {
  SweepConfig c;
  c.d = 10;
  EXPECT_EQ(threshold_marker(c), 10);
  c.M = 3;
  c.data = DataKind::PlantedDenseMulti;
  EXPECT_EQ(threshold_marker(c), 30);
  c = {};
  c.experiment = Experiment::DeepSweepH1;
  c.data = DataKind::DeepTeacher;
  c.d = 4;
  EXPECT_EQ(threshold_marker(c), 16);
  EXPECT_EQ(oracle_degree(c), 4);
}

TEST(RunTrial, FullWidthReachesGlobal) {
  SweepConfig c = tiny_sweep();
  c.train.max_epochs = 20000;
  c.train.trace_stride = 1000;
  const Dataset data = make_block_data(c, 0);
  const OracleSolution orc = solve_oracle(data);
  const TrialResult r = run_trial(c, 3, 0, 0, data, orc);
  EXPECT_TRUE(r.achieved_global) << r.nmse;
  EXPECT_NEAR(r.nmse_star, 0.0, 1e-12);
  ASSERT_TRUE(r.classification.has_value());
  EXPECT_EQ(r.seed, trial_seed(c, 3, 0, 0));
  EXPECT_NE(trial_seed(c, 3, 0, 0), trial_seed(c, 3, 0, 1));
  EXPECT_NE(trial_seed(c, 3, 0, 0), trial_seed(c, 3, 1, 0));
}

TEST(SpuriousPointCase, SmallDimension) {
  Example1Options opts;
  opts.N = 20;
  opts.perturbations = 200;
  opts.escape_train.max_epochs = 20000;
  opts.escape_train.learning_rate = 1e-2;
  const Example1Result r = run_example1_case(2, 3, opts);
  EXPECT_EQ(r.grad_norm, 0.0);
  EXPECT_GT(r.s_min_eig, 0.0);
  EXPECT_GE(r.min_perturbation_delta, 0.0);
  EXPECT_GT(r.loss, r.loss_star);
  EXPECT_EQ(r.classification.tag, PointTag::SemidefiniteResidualNonGlobal);
  EXPECT_LT(r.escaped_loss, r.loss);
}

TEST(PolyCase, ShortRunIsConsistent) {
  PolyOptions opts;
  opts.train.max_epochs = 2000;
  const PolyResult r = run_poly_case(1, opts);
  EXPECT_FALSE(r.diverged);
  EXPECT_GT(r.loss_star, 0.0);
  EXPECT_GE(r.loss, r.loss_star * (1.0 - 1e-12));
  EXPECT_NEAR(r.rel_gap, (r.loss - r.loss_star) / r.loss_star, 1e-12);
  EXPECT_GT(r.gamma, opts.gamma_eps);
  EXPECT_GE(r.penalty, 0.0);
}

TEST(Mnist, ReportOnSyntheticTask) {
  const Eigen::Index count = 140, P = 784;
  Rng rng(3);
  Matrix pixels = gaussian_matrix(count, P, 1.0, rng).cwiseAbs();
  std::vector<std::uint8_t> labels(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    labels[static_cast<std::size_t>(i)] = i % 2 ? 7 : 1;
    if (i % 2) pixels.row(i).head(50).array() += 2.0;
  }
  const MnistTask task = make_mnist_task(pixels, labels, {1, 7}, 4);
  MnistConfig cfg;
  cfg.h1s = {2, 3};
  cfg.realizations = 2;
  cfg.train.max_epochs = 200;
  const MnistReport rep = report_mnist(task, cfg);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.n_train, task.train.size());
  EXPECT_GE(rep.oracle_train_accuracy, 0.0);
  EXPECT_LE(rep.oracle_train_accuracy, 1.0);
  for (const auto& row : rep.rows) {
    EXPECT_EQ(row.realizations, 2);
    EXPECT_GE(row.avg_train_nmse, rep.oracle_nmse - 1e-12);
  }
  EXPECT_EQ(rep.to_json().at("rows").size(), 2u);
}

TEST(EnumStrings, RoundTrip) {
  for (Variant v : {Variant::Plain, Variant::AddedNorm, Variant::OrthPenalty}) EXPECT_EQ(parse_variant(to_string(v)), v);
  for (DataKind k : {DataKind::PlantedDiagonal, DataKind::PlantedDense, DataKind::PlantedDenseMulti,
                     DataKind::Independent, DataKind::DeepTeacher, DataKind::DeepRawTensor})
    EXPECT_EQ(parse_data_kind(to_string(k)), k);
  for (InitKind k : {InitKind::Auto, InitKind::RandomGaussian, InitKind::ZeroLambdaIdentityQ, InitKind::BlockIdentity})
    EXPECT_EQ(parse_init_kind(to_string(k)), k);
  EXPECT_THROW(parse_experiment("nope"), ConfigError);
}
