#pragma once

#include "qlnet/common.hpp"
#include "qlnet/data.hpp"
#include "qlnet/model.hpp"
#include "qlnet/objective.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qlnet {

enum class Optimizer { GD, SGD, Adam };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-3;
  /// Per-group overrides (Q, second-layer weights, alpha). Unset groups use
  /// learning_rate.
  std::optional<double> lr_Q, lr_lambda, lr_alpha;
  long max_epochs = 30000;
  /// SGD mini-batch size.
  long batch_size = 64;
  /// Full-batch GD stops once ||grad|| < grad_tol. Ignored by SGD and ADAM.
  double grad_tol = 1e-8;
  std::uint64_t seed = 0;
  /// Record a trace point every `trace_stride` epochs (and at the last one).
  long trace_stride = 1;
  bool train_Q = true;
  bool train_W = true;
  /// A trace point with objective above this (or non-finite) aborts the run.
  double divergence_threshold = 1e12;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct GroupRates {
  double Q = 1e-3;
  double lambda = 1e-3;
  double alpha = 1e-3;
};
GroupRates group_rates(const TrainConfig& cfg);

struct TracePoint {
  long epoch = 0;
  double loss = 0.0;
  double penalty = 0.0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

struct TrainTrace {
  std::vector<TracePoint> points;
  AnyModel model;
  long epochs_used = 0;
  bool converged = false;
  bool diverged = false;
  std::string divergence_reason;
  double final_loss = 0.0;
  double final_objective = 0.0;
  double final_grad_norm = 0.0;
};

/// Runs the configured optimizer from `model`. Divergence is reported in the
/// trace, never thrown.
TrainTrace train(AnyModel model, const Dataset& data, const ObjectiveConfig& obj, const TrainConfig& cfg);

/// theta <- theta - eta_group * grad_theta.
void gd_step(AnyModel& model, const Gradient& g, const GroupRates& rates);

/// Runs T GD steps from (lambda0, Q0) with (eta_Q, eta_lambda) and from
/// (beta^2 lambda0, Q0 / beta) with (eta_Q / beta^2, beta^4 eta_lambda);
/// returns the max over t of the relative deviation between the rescaled
/// first trajectory and the second. gamma = 0, alpha frozen.
double scaled_trajectory_check(const QLLayer& model0, const Dataset& data, double beta, double eta_Q,
                               double eta_lambda, long T);

// --- initializations ------------------------------------------------------------

/// Q i.i.d. gaussian with std q_scale (default 1/sqrt(d)), W gaussian with
/// std lambda_scale, alpha = 0.
QLLayer init_random_gaussian(Eigen::Index d, Eigen::Index k, Eigen::Index M, std::uint64_t seed,
                             double q_scale = -1.0, double lambda_scale = 0.01);
/// lambda = 0, Q = first k columns of I_d, zero-padded when k > d.
QLLayer init_identity(Eigen::Index d, Eigen::Index k, Eigen::Index M = 1);
/// lambda = 0, Q = [I_d I_d ...] (M blocks of I_d), zero-padded to width k.
QLLayer init_block_identity(Eigen::Index d, Eigen::Index M, Eigen::Index k = 0);
/// lambda = 0 and the multiset basis columns of poly_basis_init.
PolyLayer init_poly_basis(int d, int p);

struct DeepInit {
  /// Layer l gets Q = [I_h I_h ...] (block identity over its input dim,
  /// zero-padded); otherwise gaussian with std 1/sqrt(fan_in).
  bool block_identity_Q = true;
  /// Std of the output weights W is w_scale / sqrt(width).
  double w_scale = 1.0;
};
DeepQLNet init_deep(const WidthSchedule& s, std::uint64_t seed, const DeepInit& init = {});

}  // namespace qlnet
