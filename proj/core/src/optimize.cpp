#include "qlnet/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qlnet {

namespace {

template <class F>
void for_each_block(Gradient& a, const Gradient& b, F&& f) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    f(a[i].Q, b[i].Q, 0);
    f(a[i].W, b[i].W, 1);
    if (a[i].alpha.size() > 0) {
      Matrix am = a[i].alpha, bm = b[i].alpha;
      f(am, bm, 2);
      a[i].alpha = am;
    }
  }
}

double group_rate(const GroupRates& r, int group) {
  return group == 0 ? r.Q : group == 1 ? r.lambda : r.alpha;
}

void mask_groups(Gradient& g, const TrainConfig& cfg, const ObjectiveConfig& obj) {
  for (auto& l : g) {
    if (!cfg.train_Q) l.Q.setZero();
    if (!cfg.train_W) l.W.setZero();
    if (!obj.use_alpha) l.alpha.setZero();
  }
}

TracePoint make_point(long epoch, const AnyModel& model, const Dataset& data, const ObjectiveConfig& obj,
                      double grad_norm) {
  TracePoint p;
  p.epoch = epoch;
  p.loss = loss_mse(model, data);
  p.penalty = penalty(model, obj);
  p.objective = obj.gamma > 0.0 ? p.loss + obj.gamma * p.penalty : p.loss;
  p.grad_norm = grad_norm;
  return p;
}

bool is_trace_epoch(long epoch, const TrainConfig& cfg) {
  return epoch % cfg.trace_stride == 0 || epoch + 1 == cfg.max_epochs;
}

}  // namespace

std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::GD:
      return "gd";
    case Optimizer::SGD:
      return "sgd";
    case Optimizer::Adam:
      return "adam";
  }
  return "?";
}

Optimizer parse_optimizer(const std::string& s) {
  if (s == "gd") return Optimizer::GD;
  if (s == "sgd") return Optimizer::SGD;
  if (s == "adam") return Optimizer::Adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected gd, sgd or adam)");
}

void TrainConfig::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(learning_rate)) throw ConfigError("TrainConfig: learning_rate must be > 0");
  for (const auto& r : {lr_Q, lr_lambda, lr_alpha})
    if (r && !positive(*r)) throw ConfigError("TrainConfig: group learning rates must be > 0");
  if (max_epochs < 1) throw ConfigError("TrainConfig: max_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (!positive(grad_tol)) throw ConfigError("TrainConfig: grad_tol must be > 0");
  if (trace_stride < 1) throw ConfigError("TrainConfig: trace_stride must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("TrainConfig: ADAM decay rates must lie in [0, 1)");
  if (!positive(adam_eps)) throw ConfigError("TrainConfig: adam_eps must be > 0");
  if (!positive(divergence_threshold)) throw ConfigError("TrainConfig: divergence_threshold must be > 0");
}

GroupRates group_rates(const TrainConfig& cfg) {
  return {cfg.lr_Q.value_or(cfg.learning_rate), cfg.lr_lambda.value_or(cfg.learning_rate),
          cfg.lr_alpha.value_or(cfg.learning_rate)};
}

void gd_step(AnyModel& model, const Gradient& g, const GroupRates& rates) {
  Gradient step = g;
  for_each_block(step, g, [&](Matrix& s, const Matrix& gi, int group) { s = -group_rate(rates, group) * gi; });
  add_scaled(model, 1.0, step);
}

TrainTrace train(AnyModel model, const Dataset& data, const ObjectiveConfig& obj, const TrainConfig& cfg) {
  obj.validate();
  cfg.validate();
  const GroupRates rates = group_rates(cfg);
  TrainTrace trace;

  Gradient m1, m2;
  if (cfg.optimizer == Optimizer::Adam) {
    m1 = zeros_like(model);
    m2 = zeros_like(model);
  }
  double b1t = 1.0, b2t = 1.0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);

  long epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    Gradient g = grad(model, data, obj);
    mask_groups(g, cfg, obj);
    const double gn = norm(g);
    if (!std::isfinite(gn)) {
      trace.diverged = true;
      trace.divergence_reason = "non-finite gradient at epoch " + std::to_string(epoch);
      break;
    }
    if (is_trace_epoch(epoch, cfg)) {
      TracePoint p = make_point(epoch, model, data, obj, gn);
      trace.points.push_back(p);
      if (!std::isfinite(p.objective) || p.objective > cfg.divergence_threshold) {
        trace.diverged = true;
        trace.divergence_reason = "objective " + std::to_string(p.objective) + " at epoch " + std::to_string(epoch);
        break;
      }
    }
    if (cfg.optimizer == Optimizer::GD && gn < cfg.grad_tol) {
      trace.converged = true;
      break;
    }

    switch (cfg.optimizer) {
      case Optimizer::GD:
        gd_step(model, g, rates);
        break;
      case Optimizer::Adam: {
        b1t *= cfg.adam_beta1;
        b2t *= cfg.adam_beta2;
        for_each_block(m1, g, [&](Matrix& m, const Matrix& gi, int) {
          m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * gi;
        });
        for_each_block(m2, g, [&](Matrix& v, const Matrix& gi, int) {
          v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * gi.cwiseAbs2();
        });
        Gradient step = m1;
        for_each_block(step, m2, [&](Matrix& s, const Matrix& v, int group) {
          const Eigen::ArrayXXd mhat = s.array() / (1.0 - b1t);
          const Eigen::ArrayXXd vhat = v.array() / (1.0 - b2t);
          s = (-group_rate(rates, group) * mhat / (vhat.sqrt() + cfg.adam_eps)).matrix();
        });
        add_scaled(model, 1.0, step);
        break;
      }
      case Optimizer::SGD: {
        Rng rng(derive_seed(cfg.seed, 0x56d, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
          const auto stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
          const Dataset batch = data.subset({order.begin() + static_cast<std::ptrdiff_t>(start),
                                             order.begin() + static_cast<std::ptrdiff_t>(stop)});
          Gradient gb = grad(model, batch, obj);
          mask_groups(gb, cfg, obj);
          gd_step(model, gb, rates);
        }
        break;
      }
    }
  }
  trace.epochs_used = epoch;

  Gradient g = grad(model, data, obj);
  mask_groups(g, cfg, obj);
  trace.final_grad_norm = norm(g);
  trace.final_loss = loss_mse(model, data);
  trace.final_objective = objective(model, data, obj);
  if (!std::isfinite(trace.final_objective) && !trace.diverged) {
    trace.diverged = true;
    trace.divergence_reason = "non-finite final objective";
  }
  trace.model = std::move(model);
  return trace;
}

double scaled_trajectory_check(const QLLayer& model0, const Dataset& data, double beta, double eta_Q,
                               double eta_lambda, long T) {
  if (beta == 0.0 || !std::isfinite(beta)) throw ConfigError("scaled_trajectory_check: beta must be nonzero");
  if (T < 0) throw ConfigError("scaled_trajectory_check: T must be >= 0");
  const ObjectiveConfig obj{};  // gamma = 0, alpha frozen
  AnyModel a = model0;
  QLLayer scaled = model0;
  scaled.W *= beta * beta;
  scaled.Q /= beta;
  AnyModel b = scaled;
  const GroupRates ra{eta_Q, eta_lambda, 0.0};
  const GroupRates rb{eta_Q / (beta * beta), std::pow(beta, 4) * eta_lambda, 0.0};

  auto deviation = [&]() {
    const auto& la = std::get<QLLayer>(a);
    const auto& lb = std::get<QLLayer>(b);
    const double diff = (beta * beta * la.W - lb.W).squaredNorm() + (la.Q / beta - lb.Q).squaredNorm();
    const double ref = lb.W.squaredNorm() + lb.Q.squaredNorm();
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
  };
  double worst = deviation();
  for (long t = 0; t < T; ++t) {
    gd_step(a, grad(a, data, obj), ra);
    gd_step(b, grad(b, data, obj), rb);
    worst = std::max(worst, deviation());
  }
  return worst;
}

QLLayer init_random_gaussian(Eigen::Index d, Eigen::Index k, Eigen::Index M, std::uint64_t seed, double q_scale,
                             double lambda_scale) {
  if (d < 1 || k < 0 || M < 1) throw ConfigError("init_random_gaussian: need d >= 1, k >= 0, M >= 1");
  Rng rng(seed);
  if (q_scale < 0.0) q_scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix Q = gaussian_matrix(d, k, q_scale, rng);
  Matrix W = gaussian_matrix(M, k, lambda_scale, rng);
  return QLLayer(std::move(Q), std::move(W), Vector::Zero(M));
}

QLLayer init_identity(Eigen::Index d, Eigen::Index k, Eigen::Index M) {
  if (d < 1 || k < 0 || M < 1) throw ConfigError("init_identity: need d >= 1, k >= 0, M >= 1");
  Matrix Q = Matrix::Identity(d, k);
  return QLLayer(std::move(Q), Matrix::Zero(M, k), Vector::Zero(M));
}

QLLayer init_block_identity(Eigen::Index d, Eigen::Index M, Eigen::Index k) {
  if (d < 1 || M < 1) throw ConfigError("init_block_identity: need d >= 1 and M >= 1");
  if (k == 0) k = M * d;
  if (k < M * d) throw ConfigError("init_block_identity: width must be at least M d");
  Matrix Q = Matrix::Zero(d, k);
  for (Eigen::Index m = 0; m < M; ++m) Q.middleCols(m * d, d).setIdentity();
  return QLLayer(std::move(Q), Matrix::Zero(M, k), Vector::Zero(M));
}

PolyLayer init_poly_basis(int d, int p) {
  Matrix Q = poly_basis_init(d, p);
  const auto k = Q.cols();
  return PolyLayer(p, std::move(Q), Vector::Zero(k));
}

DeepQLNet init_deep(const WidthSchedule& s, std::uint64_t seed, const DeepInit& init) {
  if (s.depth() < 1 || s.h.size() != s.depth() + 1) throw ConfigError("init_deep: malformed width schedule");
  Rng rng(seed);
  std::vector<QLLayer> layers;
  for (std::size_t l = 0; l < s.depth(); ++l) {
    const auto h = s.h[l];
    const auto m = s.m[l];
    Matrix Q;
    if (init.block_identity_Q) {
      Q = Matrix::Zero(h, m);
      for (Eigen::Index c = 0; c < m; ++c) Q(c % h, c) = 1.0;
    } else {
      Q = gaussian_matrix(h, m, 1.0 / std::sqrt(static_cast<double>(h)), rng);
    }
    Matrix W = gaussian_matrix(s.h[l + 1], m, init.w_scale / std::sqrt(static_cast<double>(m)), rng);
    layers.emplace_back(std::move(Q), std::move(W), Vector::Zero(s.h[l + 1]));
  }
  return DeepQLNet(std::move(layers));
}

}  // namespace qlnet
