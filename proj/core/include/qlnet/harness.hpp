#pragma once

#include "qlnet/common.hpp"
#include "qlnet/data.hpp"
#include "qlnet/landscape.hpp"
#include "qlnet/model.hpp"
#include "qlnet/objective.hpp"
#include "qlnet/optimize.hpp"
#include "qlnet/oracle.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qlnet {

enum class Experiment { SingleSweepK, DeepSweepH1, Mnist, Example1, ScalingCheck, Poly };
enum class Variant { Plain, AddedNorm, OrthPenalty };
enum class DataKind { PlantedDiagonal, PlantedDense, PlantedDenseMulti, Independent, DeepTeacher, DeepRawTensor };
enum class InitKind { Auto, RandomGaussian, ZeroLambdaIdentityQ, BlockIdentity };

std::string to_string(Experiment e);
std::string to_string(Variant v);
std::string to_string(DataKind k);
std::string to_string(InitKind k);
Experiment parse_experiment(const std::string& s);
Variant parse_variant(const std::string& s);
DataKind parse_data_kind(const std::string& s);
InitKind parse_init_kind(const std::string& s);
PenaltyMode parse_penalty_mode(const std::string& s);
std::string to_string(PenaltyMode m);

/// Strict reader for a "train" object; missing keys keep `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& t);

/// Sum r^2 / sum y^2 over all outputs. Throws ConfigError for all-zero targets.
double nmse(const AnyModel& model, const Dataset& data);

struct SweepConfig {
  Experiment experiment = Experiment::SingleSweepK;
  Variant variant = Variant::OrthPenalty;
  DataKind data = DataKind::PlantedDiagonal;
  Eigen::Index d = 10;
  Eigen::Index N = 1500;
  /// Output channels (PlantedDenseMulti only).
  Eigen::Index M = 1;
  /// Swept values: k for single-layer sweeps, h1 for deep sweeps.
  std::vector<Eigen::Index> cells;
  int trials = 20;
  int blocks = 5;
  std::uint64_t seed = 0;
  TrainConfig train;
  InitKind init = InitKind::Auto;
  /// Std of the initial second-layer weights for random-gaussian and
  /// block-identity inits (block-identity with equal blocks needs it to break
  /// the symmetry between blocks).
  double init_lambda_scale = 0.01;
  /// Explicit penalty weight; unset selects (1/(MN)) sum y^2 + gamma_eps.
  std::optional<double> gamma;
  double gamma_eps = 1e-6;
  PenaltyMode penalty_mode = PenaltyMode::Full;
  /// Teacher hidden width for deep teacher data; 0 selects d.
  Eigen::Index teacher_h1 = 0;
  DeepInit deep_init;
  /// A trial reaches the global minimizer when |NMSE - NMSE*| <= global_tol.
  double global_tol = 0.005;
  int workers = 1;
  /// Run classify_point on single-layer results.
  bool classify = true;
  /// Output directory; empty disables file output.
  std::filesystem::path out;
  bool write_traces = false;

  void validate() const;
};

/// Reads the JSON config layout written by sweep_config_to_json, starting
/// from `base` for missing keys. Throws ConfigError on bad values.
SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig base = {});
nlohmann::json sweep_config_to_json(const SweepConfig& c);

/// Applies the reduced CI budget: 5000 epochs with a gradient-norm early stop.
void apply_fast_mode(SweepConfig& c);

struct TrialResult {
  Eigen::Index cell = 0;
  int block = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double nmse = 0.0;
  double nmse_star = 0.0;
  double loss = 0.0;
  double loss_star = 0.0;
  double grad_norm = 0.0;
  long epochs = 0;
  bool achieved_global = false;
  bool diverged = false;
  std::optional<PointClass> classification;
  TrainTrace trace;
};

struct CellSummary {
  Eigen::Index cell = 0;
  int block = 0;
  int trials = 0;
  double avg_nmse = 0.0;
  double frac_global = 0.0;
  double nmse_star = 0.0;
  Eigen::Index threshold_marker = 0;
  int diverged = 0;
};

struct SweepReport {
  SweepConfig config;
  std::vector<CellSummary> rows;
  std::vector<TrialResult> trials;
  Eigen::Index threshold_marker = 0;
  /// Smallest cell whose trials all reached the global minimizer.
  std::optional<Eigen::Index> earliest_success;
  /// True if every cell at or beyond the threshold marker has fraction 1.
  bool all_past_threshold_global = false;
  int diverged = 0;

  /// Fraction of trials that reached the global minimizer in `cell`.
  double fraction(Eigen::Index cell) const;
  nlohmann::json summary() const;
};

/// Data block `block` of the sweep (seeded from the master seed).
Dataset make_block_data(const SweepConfig& c, int block);
/// Objective config implied by the variant.
ObjectiveConfig make_objective(const SweepConfig& c, const Dataset& data);
/// Initial model for one trial.
AnyModel make_initial_model(const SweepConfig& c, Eigen::Index cell, std::uint64_t trial_seed, const Dataset& data);
/// Oracle degree used for the experiment (2 single-layer, 4 deep).
int oracle_degree(const SweepConfig& c);
Eigen::Index threshold_marker(const SweepConfig& c);
std::uint64_t trial_seed(const SweepConfig& c, Eigen::Index cell, int block, int trial);

TrialResult run_trial(const SweepConfig& c, Eigen::Index cell, int block, int trial, const Dataset& data,
                      const OracleSolution& oracle);

/// Runs every cell x block x trial on up to c.workers threads and, if c.out
/// is set, writes results.csv, summary.json and (optionally) traces/.
SweepReport run_sweep(const SweepConfig& c);
void write_sweep_outputs(const SweepReport& r, const std::filesystem::path& dir);
/// CSV with the fixed column set, one row per cell per block.
std::string sweep_csv(const SweepReport& r);

// --- spurious stationary point -------------------------------------------------------------------

struct Example1Options {
  Eigen::Index N = 50;
  int perturbations = 1000;
  double radius = 1e-3;
  double escape_perturbation = 1e-6;
  TrainConfig escape_train;
  Example1Options();
};

struct Example1Result {
  Eigen::Index d = 0;
  std::uint64_t seed = 0;
  double grad_norm = 0.0;
  double loss = 0.0;
  double loss_star = 0.0;
  double s_min_eig = 0.0;
  /// min over perturbations of loss(perturbed) - loss(point).
  double min_perturbation_delta = 0.0;
  PointClass classification;
  double escaped_loss = 0.0;
  /// |escaped_loss - loss_star| / max(loss_star, zero-model loss).
  double escape_gap = 0.0;
};

Example1Result run_example1_case(Eigen::Index d, std::uint64_t seed, const Example1Options& opts = {});

// --- polynomial-linear extension ------------------------------------------------------

struct PolyOptions {
  int d = 2;
  int p = 3;
  Eigen::Index N = 200;
  double noise = 0.1;
  double gamma_eps = 1e-6;
  TrainConfig train;
  PolyOptions();
};

struct PolyResult {
  std::uint64_t seed = 0;
  double loss = 0.0;
  double loss_star = 0.0;
  double penalty = 0.0;
  double gamma = 0.0;
  /// |loss - loss_star| / loss_star.
  double rel_gap = 0.0;
  bool diverged = false;
};

/// Basis-initialized PL layer trained on noisy planted degree-p data; the
/// MSE part is compared with the degree-p monomial oracle.
PolyResult run_poly_case(std::uint64_t seed, const PolyOptions& opts = {});

// --- MNIST ---------------------------------------------------------------------------

struct MnistConfig {
  std::vector<Eigen::Index> h1s{81, 121, 150};
  int realizations = 10;
  std::uint64_t seed = 0;
  TrainConfig train;
  double gamma_eps = 1e-6;
  PenaltyMode penalty_mode = PenaltyMode::Full;
  DeepInit deep_init;
  double global_tol = 0.005;
  int workers = 1;
  MnistConfig();
};

struct MnistRow {
  Eigen::Index h1 = 0;
  int realizations = 0;
  double avg_train_nmse = 0.0;
  double nmse_star = 0.0;
  double frac_global = 0.0;
  double avg_train_accuracy = 0.0;
  double avg_test_accuracy = 0.0;
};

struct MnistReport {
  std::pair<int, int> digits{3, 8};
  Eigen::Index n_train = 0;
  Eigen::Index n_test = 0;
  double oracle_nmse = 0.0;
  double oracle_train_accuracy = 0.0;
  double oracle_test_accuracy = 0.0;
  std::vector<MnistRow> rows;
  nlohmann::json to_json() const;
};

MnistReport report_mnist(const MnistTask& task, const MnistConfig& cfg);

// Strict JSON readers; missing keys keep the given defaults.
MnistConfig mnist_config_from_json(const nlohmann::json& j, MnistConfig base = {});
Example1Options example1_options_from_json(const nlohmann::json& j, Example1Options base = {});
PolyOptions poly_options_from_json(const nlohmann::json& j, PolyOptions base = {});

}  // namespace qlnet
