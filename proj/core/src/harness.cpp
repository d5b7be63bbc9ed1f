#include "qlnet/harness.hpp"

#include "qlnet/serialize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace qlnet {

namespace {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<Experiment> kExperiments[] = {
    {Experiment::SingleSweepK, "single-sweep-k"}, {Experiment::DeepSweepH1, "deep-sweep-h1"},
    {Experiment::Mnist, "mnist"},                 {Experiment::Example1, "example1"},
    {Experiment::ScalingCheck, "scaling-check"},  {Experiment::Poly, "poly"}};
constexpr EnumName<Variant> kVariants[] = {
    {Variant::Plain, "plain"}, {Variant::AddedNorm, "added-norm"}, {Variant::OrthPenalty, "orth-penalty"}};
constexpr EnumName<DataKind> kDataKinds[] = {{DataKind::PlantedDiagonal, "planted-diagonal"},
                                             {DataKind::PlantedDense, "planted-dense"},
                                             {DataKind::PlantedDenseMulti, "planted-dense-multi"},
                                             {DataKind::Independent, "independent"},
                                             {DataKind::DeepTeacher, "deep-teacher"},
                                             {DataKind::DeepRawTensor, "deep-raw-tensor"}};
constexpr EnumName<InitKind> kInitKinds[] = {{InitKind::Auto, "auto"},
                                             {InitKind::RandomGaussian, "random-gaussian"},
                                             {InitKind::ZeroLambdaIdentityQ, "zero-lambda-identity-q"},
                                             {InitKind::BlockIdentity, "block-identity"}};
constexpr EnumName<PenaltyMode> kPenaltyModes[] = {
    {PenaltyMode::Full, "full"}, {PenaltyMode::PerBlock, "per-block"}, {PenaltyMode::Matricized, "matricized"}};

template <class E, std::size_t N>
std::string name_of(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <class E, std::size_t N>
E parse_enum(const EnumName<E> (&table)[N], const std::string& s, const char* what) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string options;
  for (const auto& e : table) options += std::string(options.empty() ? "" : ", ") + e.name;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + options + ")");
}

bool is_deep(const SweepConfig& c) { return c.experiment == Experiment::DeepSweepH1; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
template <class F>
void parallel_for(std::size_t n, int workers, F&& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, std::min<int>(workers, static_cast<int>(n))));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

QLLayer block_identity_layer(Eigen::Index d, Eigen::Index k, Eigen::Index M, double lambda_scale, std::uint64_t seed) {
  Matrix Q = Matrix::Zero(d, k);
  for (Eigen::Index c = 0; c < std::min(k, M * d); ++c) Q(c % d, c) = 1.0;
  Rng rng(seed);
  return QLLayer(std::move(Q), gaussian_matrix(M, k, lambda_scale, rng), Vector::Zero(M));
}

template <class T>
T get_checked(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig t) {
  check_keys(j,
             {"optimizer", "learning_rate", "lr_Q", "lr_lambda", "lr_alpha", "max_epochs", "batch_size", "grad_tol",
              "seed", "trace_stride", "train_Q", "train_W", "divergence_threshold"},
             "train");
  if (j.contains("optimizer")) t.optimizer = parse_optimizer(get_checked<std::string>(j, "optimizer"));
  if (j.contains("learning_rate")) t.learning_rate = get_checked<double>(j, "learning_rate");
  if (j.contains("lr_Q")) t.lr_Q = get_checked<double>(j, "lr_Q");
  if (j.contains("lr_lambda")) t.lr_lambda = get_checked<double>(j, "lr_lambda");
  if (j.contains("lr_alpha")) t.lr_alpha = get_checked<double>(j, "lr_alpha");
  if (j.contains("max_epochs")) t.max_epochs = get_checked<long>(j, "max_epochs");
  if (j.contains("batch_size")) t.batch_size = get_checked<long>(j, "batch_size");
  if (j.contains("grad_tol")) t.grad_tol = get_checked<double>(j, "grad_tol");
  if (j.contains("seed")) t.seed = get_checked<std::uint64_t>(j, "seed");
  if (j.contains("trace_stride")) t.trace_stride = get_checked<long>(j, "trace_stride");
  if (j.contains("train_Q")) t.train_Q = get_checked<bool>(j, "train_Q");
  if (j.contains("train_W")) t.train_W = get_checked<bool>(j, "train_W");
  if (j.contains("divergence_threshold")) t.divergence_threshold = get_checked<double>(j, "divergence_threshold");
  t.validate();
  return t;
}

nlohmann::json train_config_to_json(const TrainConfig& t) {
  nlohmann::json j = {{"optimizer", to_string(t.optimizer)}, {"learning_rate", t.learning_rate},
                      {"max_epochs", t.max_epochs},           {"batch_size", t.batch_size},
                      {"grad_tol", t.grad_tol},               {"seed", t.seed},
                      {"trace_stride", t.trace_stride},       {"train_Q", t.train_Q},
                      {"train_W", t.train_W},                 {"divergence_threshold", t.divergence_threshold}};
  if (t.lr_Q) j["lr_Q"] = *t.lr_Q;
  if (t.lr_lambda) j["lr_lambda"] = *t.lr_lambda;
  if (t.lr_alpha) j["lr_alpha"] = *t.lr_alpha;
  return j;
}

std::string to_string(Experiment e) { return name_of(kExperiments, e); }
std::string to_string(Variant v) { return name_of(kVariants, v); }
std::string to_string(DataKind k) { return name_of(kDataKinds, k); }
std::string to_string(InitKind k) { return name_of(kInitKinds, k); }
std::string to_string(PenaltyMode m) { return name_of(kPenaltyModes, m); }
Experiment parse_experiment(const std::string& s) { return parse_enum(kExperiments, s, "experiment"); }
Variant parse_variant(const std::string& s) { return parse_enum(kVariants, s, "variant"); }
DataKind parse_data_kind(const std::string& s) { return parse_enum(kDataKinds, s, "data kind"); }
InitKind parse_init_kind(const std::string& s) { return parse_enum(kInitKinds, s, "init"); }
PenaltyMode parse_penalty_mode(const std::string& s) { return parse_enum(kPenaltyModes, s, "penalty mode"); }

double nmse(const AnyModel& model, const Dataset& data) {
  const double energy = data.target_energy();
  if (!(energy > 0.0)) throw ConfigError("nmse: all-zero targets");
  return residuals(model, data).squaredNorm() / energy;
}

// --- configuration -------------------------------------------------------------------

void SweepConfig::validate() const {
  if (experiment != Experiment::SingleSweepK && experiment != Experiment::DeepSweepH1)
    throw ConfigError("sweep: experiment must be single-sweep-k or deep-sweep-h1");
  if (cells.empty()) throw ConfigError("sweep: the cell range is empty");
  for (auto c : cells)
    if (c < (is_deep(*this) ? 1 : 0)) throw ConfigError("sweep: invalid cell value " + std::to_string(c));
  if (trials < 1) throw ConfigError("sweep: trials must be >= 1");
  if (blocks < 1) throw ConfigError("sweep: blocks must be >= 1");
  if (d < 1 || N < 1 || M < 1) throw ConfigError("sweep: need d, N, M >= 1");
  if (M > 1 && data != DataKind::PlantedDenseMulti) throw ConfigError("sweep: M > 1 requires planted-dense-multi data");
  const bool deep_data = data == DataKind::DeepTeacher || data == DataKind::DeepRawTensor;
  if (is_deep(*this) != deep_data) throw ConfigError("sweep: deep sweeps require deep data and vice versa");
  if (gamma && !(*gamma >= 0.0)) throw ConfigError("sweep: gamma must be >= 0");
  if (!(gamma_eps >= 0.0)) throw ConfigError("sweep: gamma_eps must be >= 0");
  if (!(global_tol > 0.0)) throw ConfigError("sweep: global_tol must be > 0");
  if (workers < 1) throw ConfigError("sweep: workers must be >= 1");
  if (!(init_lambda_scale >= 0.0)) throw ConfigError("sweep: init_lambda_scale must be >= 0");
  if (teacher_h1 < 0) throw ConfigError("sweep: teacher_h1 must be >= 0");
  train.validate();
}

SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig c) {
  check_keys(j,
             {"experiment", "variant", "data", "d", "N", "M", "cells", "cell_range", "trials", "blocks", "seed", "train",
              "init", "init_lambda_scale", "gamma", "gamma_eps", "penalty_mode", "teacher_h1", "deep_init", "global_tol", "workers",
              "classify", "out", "write_traces"},
             "config");
  if (j.contains("experiment")) c.experiment = parse_experiment(get_checked<std::string>(j, "experiment"));
  if (j.contains("variant")) c.variant = parse_variant(get_checked<std::string>(j, "variant"));
  if (j.contains("data")) c.data = parse_data_kind(get_checked<std::string>(j, "data"));
  if (j.contains("d")) c.d = get_checked<Eigen::Index>(j, "d");
  if (j.contains("N")) c.N = get_checked<Eigen::Index>(j, "N");
  if (j.contains("M")) c.M = get_checked<Eigen::Index>(j, "M");
  if (j.contains("cells")) c.cells = get_checked<std::vector<Eigen::Index>>(j, "cells");
  if (j.contains("cell_range")) {
    const auto r = get_checked<std::vector<Eigen::Index>>(j, "cell_range");
    if (r.size() != 2 || r[0] > r[1]) throw ConfigError("config key 'cell_range': expected [first, last]");
    c.cells.clear();
    for (auto v = r[0]; v <= r[1]; ++v) c.cells.push_back(v);
  }
  if (j.contains("trials")) c.trials = get_checked<int>(j, "trials");
  if (j.contains("blocks")) c.blocks = get_checked<int>(j, "blocks");
  if (j.contains("seed")) c.seed = get_checked<std::uint64_t>(j, "seed");
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("init")) c.init = parse_init_kind(get_checked<std::string>(j, "init"));
  if (j.contains("init_lambda_scale")) c.init_lambda_scale = get_checked<double>(j, "init_lambda_scale");
  if (j.contains("gamma")) {
    if (j.at("gamma").is_null())
      c.gamma.reset();
    else
      c.gamma = get_checked<double>(j, "gamma");
  }
  if (j.contains("gamma_eps")) c.gamma_eps = get_checked<double>(j, "gamma_eps");
  if (j.contains("penalty_mode")) c.penalty_mode = parse_penalty_mode(get_checked<std::string>(j, "penalty_mode"));
  if (j.contains("teacher_h1")) c.teacher_h1 = get_checked<Eigen::Index>(j, "teacher_h1");
  if (j.contains("deep_init")) {
    const auto& di = j.at("deep_init");
    check_keys(di, {"block_identity_Q", "w_scale"}, "deep_init");
    if (di.contains("block_identity_Q")) c.deep_init.block_identity_Q = get_checked<bool>(di, "block_identity_Q");
    if (di.contains("w_scale")) c.deep_init.w_scale = get_checked<double>(di, "w_scale");
  }
  if (j.contains("global_tol")) c.global_tol = get_checked<double>(j, "global_tol");
  if (j.contains("workers")) c.workers = get_checked<int>(j, "workers");
  if (j.contains("classify")) c.classify = get_checked<bool>(j, "classify");
  if (j.contains("out")) c.out = get_checked<std::string>(j, "out");
  if (j.contains("write_traces")) c.write_traces = get_checked<bool>(j, "write_traces");
  return c;
}

nlohmann::json sweep_config_to_json(const SweepConfig& c) {
  nlohmann::json j = {{"experiment", to_string(c.experiment)},
                      {"variant", to_string(c.variant)},
                      {"data", to_string(c.data)},
                      {"d", c.d},
                      {"N", c.N},
                      {"M", c.M},
                      {"cells", c.cells},
                      {"trials", c.trials},
                      {"blocks", c.blocks},
                      {"seed", c.seed},
                      {"train", train_config_to_json(c.train)},
                      {"init", to_string(c.init)},
                      {"init_lambda_scale", c.init_lambda_scale},
                      {"gamma_eps", c.gamma_eps},
                      {"penalty_mode", to_string(c.penalty_mode)},
                      {"teacher_h1", c.teacher_h1},
                      {"deep_init", {{"block_identity_Q", c.deep_init.block_identity_Q}, {"w_scale", c.deep_init.w_scale}}},
                      {"global_tol", c.global_tol},
                      {"workers", c.workers},
                      {"classify", c.classify},
                      {"write_traces", c.write_traces}};
  j["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json(nullptr);
  if (!c.out.empty()) j["out"] = c.out.string();
  return j;
}

void apply_fast_mode(SweepConfig& c) {
  c.train.max_epochs = std::min<long>(c.train.max_epochs, 5000);
  c.train.optimizer = Optimizer::Adam;
  c.train.trace_stride = std::max<long>(c.train.trace_stride, 100);
}

// --- sweep -----------------------------------------------------------------------------

Dataset make_block_data(const SweepConfig& c, int block) {
  const std::uint64_t s = derive_seed(c.seed, 1, static_cast<std::uint64_t>(block));
  switch (c.data) {
    case DataKind::PlantedDiagonal:
      return gen_planted_diagonal(c.d, c.N, s);
    case DataKind::PlantedDense:
      return gen_planted_dense(c.d, c.N, s);
    case DataKind::PlantedDenseMulti:
      return gen_planted_dense_multi(c.d, c.M, c.N, s);
    case DataKind::Independent:
      return gen_independent(c.d, c.N, s);
    case DataKind::DeepTeacher:
      return gen_deep_planted(c.d, c.teacher_h1 > 0 ? c.teacher_h1 : c.d, c.N, s);
    case DataKind::DeepRawTensor:
      return gen_deep_planted(c.d, c.teacher_h1 > 0 ? c.teacher_h1 : c.d, c.N, s, true);
  }
  throw ConfigError("unknown data kind");
}

ObjectiveConfig make_objective(const SweepConfig& c, const Dataset& data) {
  ObjectiveConfig o;
  switch (c.variant) {
    case Variant::Plain:
      break;
    case Variant::AddedNorm:
      o.use_alpha = !is_deep(c);
      break;
    case Variant::OrthPenalty:
      o.gamma = c.gamma ? *c.gamma : default_gamma(data, c.gamma_eps);
      o.penalty_mode = c.penalty_mode;
      break;
  }
  return o;
}

AnyModel make_initial_model(const SweepConfig& c, Eigen::Index cell, std::uint64_t seed, const Dataset& data) {
  if (is_deep(c)) return init_deep(two_layer_schedule(c.d, cell), seed, c.deep_init);
  const Eigen::Index M = data.output_dim();
  InitKind kind = c.init;
  if (kind == InitKind::Auto)
    kind = c.variant == Variant::OrthPenalty ? (M > 1 ? InitKind::BlockIdentity : InitKind::ZeroLambdaIdentityQ)
                                             : InitKind::RandomGaussian;
  switch (kind) {
    case InitKind::RandomGaussian:
      return init_random_gaussian(c.d, cell, M, seed, -1.0, c.init_lambda_scale);
    case InitKind::ZeroLambdaIdentityQ:
      return init_identity(c.d, cell, M);
    case InitKind::BlockIdentity:
    case InitKind::Auto:
      return block_identity_layer(c.d, cell, M, c.init_lambda_scale, seed);
  }
  throw ConfigError("unknown init kind");
}

int oracle_degree(const SweepConfig& c) { return is_deep(c) ? 4 : 2; }

Eigen::Index threshold_marker(const SweepConfig& c) { return is_deep(c) ? c.d * c.d : c.M * c.d; }

std::uint64_t trial_seed(const SweepConfig& c, Eigen::Index cell, int block, int trial) {
  return derive_seed(c.seed, 2, static_cast<std::uint64_t>(block),
                     (static_cast<std::uint64_t>(cell) << 20) ^ static_cast<std::uint64_t>(trial));
}

TrialResult run_trial(const SweepConfig& c, Eigen::Index cell, int block, int trial, const Dataset& data,
                      const OracleSolution& oracle) {
  TrialResult r;
  r.cell = cell;
  r.block = block;
  r.trial = trial;
  r.seed = trial_seed(c, cell, block, trial);
  const ObjectiveConfig obj = make_objective(c, data);
  TrainConfig tc = c.train;
  tc.seed = r.seed;
  r.trace = train(make_initial_model(c, cell, r.seed, data), data, obj, tc);
  const double scale = static_cast<double>(data.targets().size()) / data.target_energy();
  r.loss = r.trace.final_loss;
  r.loss_star = oracle.loss_star;
  r.nmse = r.loss * scale;
  r.nmse_star = oracle.loss_star * scale;
  r.grad_norm = r.trace.final_grad_norm;
  r.epochs = r.trace.epochs_used;
  r.diverged = r.trace.diverged;
  r.achieved_global = !r.diverged && std::abs(r.nmse - r.nmse_star) <= c.global_tol;
  if (c.classify && !r.diverged && std::holds_alternative<QLLayer>(r.trace.model)) {
    Tolerances tol;
    tol.seed = r.seed;
    r.classification = classify_point(std::get<QLLayer>(r.trace.model), data, oracle, obj, tol);
  }
  if (!c.write_traces) r.trace.points.clear();
  return r;
}

double SweepReport::fraction(Eigen::Index cell) const {
  int total = 0, hits = 0;
  for (const auto& t : trials)
    if (t.cell == cell) {
      ++total;
      hits += t.achieved_global ? 1 : 0;
    }
  if (total == 0) throw ConfigError("fraction: unknown cell " + std::to_string(cell));
  return static_cast<double>(hits) / total;
}

nlohmann::json SweepReport::summary() const {
  nlohmann::json cells = nlohmann::json::array();
  for (auto cell : config.cells) {
    double nmse_sum = 0.0, star_sum = 0.0;
    int n = 0, div = 0;
    std::map<std::string, int> tags;
    for (const auto& t : trials)
      if (t.cell == cell) {
        nmse_sum += t.nmse;
        star_sum += t.nmse_star;
        div += t.diverged ? 1 : 0;
        ++n;
        if (t.classification) ++tags[to_string(t.classification->tag)];
      }
    cells.push_back({{"cell", cell},
                     {"trials", n},
                     {"avg_nmse", n ? nmse_sum / n : 0.0},
                     {"avg_nmse_star", n ? star_sum / n : 0.0},
                     {"frac_global", n ? fraction(cell) : 0.0},
                     {"diverged", div},
                     {"classification", tags}});
  }
  nlohmann::json j = {{"config", sweep_config_to_json(config)},
                      {"threshold_marker", threshold_marker},
                      {"all_past_threshold_global", all_past_threshold_global},
                      {"diverged", diverged},
                      {"cells", cells}};
  j["earliest_success"] = earliest_success ? nlohmann::json(*earliest_success) : nlohmann::json(nullptr);
  return j;
}

std::string sweep_csv(const SweepReport& r) {
  std::ostringstream out;
  out << "experiment,variant,cell,block,trials,avg_nmse,frac_global,nmse_star,threshold_marker\n";
  for (const auto& row : r.rows)
    out << to_string(r.config.experiment) << ',' << to_string(r.config.variant) << ',' << row.cell << ','
        << row.block << ',' << row.trials << ',' << fmt(row.avg_nmse) << ',' << fmt(row.frac_global) << ','
        << fmt(row.nmse_star) << ',' << row.threshold_marker << '\n';
  return out.str();
}

void write_sweep_outputs(const SweepReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "results.csv");
    if (!out) throw FormatError("cannot write " + (dir / "results.csv").string());
    out << sweep_csv(r);
  }
  {
    std::ofstream out(dir / "summary.json");
    if (!out) throw FormatError("cannot write " + (dir / "summary.json").string());
    nlohmann::json j = r.summary();
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : r.trials) {
      nlohmann::json tj = {{"cell", t.cell},         {"block", t.block},        {"trial", t.trial},
                           {"seed", t.seed},         {"nmse", t.nmse},          {"nmse_star", t.nmse_star},
                           {"grad_norm", t.grad_norm}, {"epochs", t.epochs},    {"achieved_global", t.achieved_global},
                           {"diverged", t.diverged}};
      if (t.classification) tj["classification"] = point_class_to_json(*t.classification);
      trials.push_back(tj);
    }
    j["trials"] = trials;
    out << j.dump(2) << '\n';
  }
  if (r.config.write_traces)
    for (const auto& t : r.trials)
      write_trace_jsonl(dir / "traces" /
                            ("cell" + std::to_string(t.cell) + "_block" + std::to_string(t.block) + "_trial" +
                             std::to_string(t.trial) + ".jsonl"),
                        t.trace);
}

SweepReport run_sweep(const SweepConfig& c) {
  c.validate();
  std::vector<Dataset> data;
  std::vector<OracleSolution> oracles;
  for (int b = 0; b < c.blocks; ++b) {
    data.push_back(make_block_data(c, b));
    oracles.push_back(solve_oracle(data.back(), oracle_degree(c)));
  }

  struct Job {
    Eigen::Index cell;
    int block, trial;
  };
  std::vector<Job> jobs;
  for (auto cell : c.cells)
    for (int b = 0; b < c.blocks; ++b)
      for (int t = 0; t < c.trials; ++t) jobs.push_back({cell, b, t});

  SweepReport rep;
  rep.config = c;
  rep.threshold_marker = threshold_marker(c);
  rep.trials.resize(jobs.size());
  parallel_for(jobs.size(), c.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const auto b = static_cast<std::size_t>(job.block);
    rep.trials[i] = run_trial(c, job.cell, job.block, job.trial, data[b], oracles[b]);
  });

  std::size_t i = 0;
  for (auto cell : c.cells)
    for (int b = 0; b < c.blocks; ++b) {
      CellSummary row;
      row.cell = cell;
      row.block = b;
      row.trials = c.trials;
      row.threshold_marker = rep.threshold_marker;
      int hits = 0;
      for (int t = 0; t < c.trials; ++t, ++i) {
        const auto& tr = rep.trials[i];
        row.avg_nmse += tr.nmse / c.trials;
        row.nmse_star = tr.nmse_star;
        hits += tr.achieved_global ? 1 : 0;
        row.diverged += tr.diverged ? 1 : 0;
      }
      row.frac_global = static_cast<double>(hits) / c.trials;
      rep.diverged += row.diverged;
      rep.rows.push_back(row);
    }

  std::vector<Eigen::Index> sorted = c.cells;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  bool any_past = false, all_past = true;
  for (auto cell : sorted) {
    const double f = rep.fraction(cell);
    if (!rep.earliest_success && f == 1.0) rep.earliest_success = cell;
    if (cell >= rep.threshold_marker) {
      any_past = true;
      all_past = all_past && f == 1.0;
    }
  }
  rep.all_past_threshold_global = any_past && all_past;
  if (!c.out.empty()) write_sweep_outputs(rep, c.out);
  return rep;
}

// --- spurious stationary point -------------------------------------------------------------------------

Example1Options::Example1Options() {
  escape_train.optimizer = Optimizer::Adam;
  escape_train.learning_rate = 1e-2;
  escape_train.max_epochs = 20000;
  escape_train.trace_stride = 1000;
}

Example1Result run_example1_case(Eigen::Index d, std::uint64_t seed, const Example1Options& opts) {
  const Example1 ex = make_example1(d, opts.N, seed);
  const OracleSolution oracle = solve_oracle(ex.data);
  const ObjectiveConfig pinned{};

  Example1Result r;
  r.d = d;
  r.seed = seed;
  r.grad_norm = norm(grad(ex.point, ex.data, pinned));
  r.loss = loss_mse(ex.point, ex.data);
  r.loss_star = oracle.loss_star;
  r.classification = classify_point(ex.point, ex.data, oracle, pinned);
  r.s_min_eig = sym_eig(residual_matrix(ex.point, ex.data)).eigenvalues.minCoeff();

  Rng rng(derive_seed(seed, 0xe1));
  r.min_perturbation_delta = std::numeric_limits<double>::infinity();
  for (int i = 0; i < opts.perturbations; ++i) {
    Matrix dQ = gaussian_matrix(d, d, 1.0, rng);
    Matrix dW = gaussian_matrix(1, d, 1.0, rng);
    const double scale = opts.radius / std::sqrt(dQ.squaredNorm() + dW.squaredNorm());
    QLLayer p = ex.point;
    p.Q += scale * dQ;
    p.W += scale * dW;
    r.min_perturbation_delta = std::min(r.min_perturbation_delta, loss_mse(p, ex.data) - r.loss);
  }

  ObjectiveConfig added_norm;
  added_norm.use_alpha = true;
  QLLayer start = ex.point;
  start.Q += gaussian_matrix(d, d, opts.escape_perturbation, rng);
  start.W += gaussian_matrix(1, d, opts.escape_perturbation, rng);
  start.alpha += gaussian_vector(1, opts.escape_perturbation, rng);
  TrainConfig tc = opts.escape_train;
  tc.seed = seed;
  const TrainTrace tr = train(start, ex.data, added_norm, tc);
  r.escaped_loss = tr.final_loss;
  r.escape_gap = std::abs(r.escaped_loss - r.loss_star) / std::max(r.loss_star, ex.data.zero_model_loss());
  return r;
}

// --- polynomial-linear extension -------------------------------------------------------

PolyOptions::PolyOptions() {
  train.optimizer = Optimizer::Adam;
  train.learning_rate = 3e-4;
  train.max_epochs = 100000;
  train.trace_stride = 1000;
}

PolyResult run_poly_case(std::uint64_t seed, const PolyOptions& opts) {
  const Dataset data = gen_planted_poly(opts.d, opts.p, opts.N, derive_seed(seed, 0x9017), opts.noise);
  const OracleSolution oracle = solve_oracle(data, opts.p);
  ObjectiveConfig obj;
  obj.gamma = default_gamma(data, opts.gamma_eps);
  TrainConfig tc = opts.train;
  tc.seed = seed;
  const TrainTrace tr = train(init_poly_basis(opts.d, opts.p), data, obj, tc);
  PolyResult r;
  r.seed = seed;
  r.loss = tr.final_loss;
  r.loss_star = oracle.loss_star;
  r.gamma = obj.gamma;
  r.penalty = penalty(tr.model, obj);
  r.diverged = tr.diverged;
  r.rel_gap = std::abs(r.loss - r.loss_star) / std::max(r.loss_star, 1e-300);
  return r;
}

// --- MNIST -----------------------------------------------------------------------------

MnistConfig::MnistConfig() {
  train.optimizer = Optimizer::Adam;
  train.learning_rate = 1e-3;
  train.max_epochs = 30000;
  train.trace_stride = 1000;
}

nlohmann::json MnistReport::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"h1", r.h1},
                      {"realizations", r.realizations},
                      {"avg_train_nmse", r.avg_train_nmse},
                      {"nmse_star", r.nmse_star},
                      {"frac_global", r.frac_global},
                      {"avg_train_accuracy", r.avg_train_accuracy},
                      {"avg_test_accuracy", r.avg_test_accuracy}});
  return {{"digits", {digits.first, digits.second}},
          {"n_train", n_train},
          {"n_test", n_test},
          {"oracle_nmse", oracle_nmse},
          {"oracle_train_accuracy", oracle_train_accuracy},
          {"oracle_test_accuracy", oracle_test_accuracy},
          {"rows", rows_j}};
}

MnistReport report_mnist(const MnistTask& task, const MnistConfig& cfg) {
  if (cfg.h1s.empty() || cfg.realizations < 1) throw ConfigError("mnist: need h1 values and realizations >= 1");
  cfg.train.validate();
  MnistReport rep;
  rep.digits = task.digits;
  rep.n_train = task.train.size();
  rep.n_test = task.test.size();

  const OracleSolution oracle = solve_oracle(task.train, 4);
  rep.oracle_nmse = oracle_nmse(oracle, task.train);
  const Vector train_pred = feature_matrix(task.train, 4, false) * oracle.coefficients.col(0);
  const Vector test_pred = feature_matrix(task.test, 4, false) * oracle.coefficients.col(0);
  rep.oracle_train_accuracy = sign_accuracy(train_pred, task.train.y());
  rep.oracle_test_accuracy = sign_accuracy(test_pred, task.test.y());

  ObjectiveConfig obj;
  obj.gamma = default_gamma(task.train, cfg.gamma_eps);
  obj.penalty_mode = cfg.penalty_mode;
  const Eigen::Index d = task.train.input_dim();

  struct Out {
    double nmse, train_acc, test_acc;
  };
  const std::size_t per = static_cast<std::size_t>(cfg.realizations);
  std::vector<Out> outs(cfg.h1s.size() * per);
  parallel_for(outs.size(), cfg.workers, [&](std::size_t i) {
    const auto h1 = cfg.h1s[i / per];
    const auto seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(h1), i % per);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainTrace tr = train(init_deep(two_layer_schedule(d, h1), seed, cfg.deep_init), task.train, obj, tc);
    outs[i] = {nmse(tr.model, task.train), classify_sign(tr.model, task.train), classify_sign(tr.model, task.test)};
  });

  for (std::size_t h = 0; h < cfg.h1s.size(); ++h) {
    MnistRow row;
    row.h1 = cfg.h1s[h];
    row.realizations = cfg.realizations;
    row.nmse_star = rep.oracle_nmse;
    int hits = 0;
    for (std::size_t r = 0; r < per; ++r) {
      const Out& o = outs[h * per + r];
      row.avg_train_nmse += o.nmse / cfg.realizations;
      row.avg_train_accuracy += o.train_acc / cfg.realizations;
      row.avg_test_accuracy += o.test_acc / cfg.realizations;
      hits += std::abs(o.nmse - rep.oracle_nmse) <= cfg.global_tol ? 1 : 0;
    }
    row.frac_global = static_cast<double>(hits) / cfg.realizations;
    rep.rows.push_back(row);
  }
  return rep;
}

// --- config readers for the non-sweep experiments ------------------------------------

MnistConfig mnist_config_from_json(const nlohmann::json& j, MnistConfig c) {
  check_keys(j, {"h1s", "realizations", "seed", "train", "gamma_eps", "penalty_mode", "deep_init", "global_tol", "workers"},
             "mnist config");
  if (j.contains("h1s")) c.h1s = get_checked<std::vector<Eigen::Index>>(j, "h1s");
  if (j.contains("realizations")) c.realizations = get_checked<int>(j, "realizations");
  if (j.contains("seed")) c.seed = get_checked<std::uint64_t>(j, "seed");
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("gamma_eps")) c.gamma_eps = get_checked<double>(j, "gamma_eps");
  if (j.contains("penalty_mode")) c.penalty_mode = parse_penalty_mode(get_checked<std::string>(j, "penalty_mode"));
  if (j.contains("deep_init")) {
    const auto& di = j.at("deep_init");
    check_keys(di, {"block_identity_Q", "w_scale"}, "deep_init");
    if (di.contains("block_identity_Q")) c.deep_init.block_identity_Q = get_checked<bool>(di, "block_identity_Q");
    if (di.contains("w_scale")) c.deep_init.w_scale = get_checked<double>(di, "w_scale");
  }
  if (j.contains("global_tol")) c.global_tol = get_checked<double>(j, "global_tol");
  if (j.contains("workers")) c.workers = get_checked<int>(j, "workers");
  if (c.h1s.empty()) throw ConfigError("mnist config: h1s must be nonempty");
  if (c.realizations < 1) throw ConfigError("mnist config: realizations must be >= 1");
  return c;
}

Example1Options example1_options_from_json(const nlohmann::json& j, Example1Options o) {
  check_keys(j, {"N", "perturbations", "radius", "escape_perturbation", "escape_train"}, "example1 config");
  if (j.contains("N")) o.N = get_checked<Eigen::Index>(j, "N");
  if (j.contains("perturbations")) o.perturbations = get_checked<int>(j, "perturbations");
  if (j.contains("radius")) o.radius = get_checked<double>(j, "radius");
  if (j.contains("escape_perturbation")) o.escape_perturbation = get_checked<double>(j, "escape_perturbation");
  if (j.contains("escape_train")) o.escape_train = train_config_from_json(j.at("escape_train"), o.escape_train);
  if (o.N < 1 || o.perturbations < 0 || !(o.radius > 0.0) || !(o.escape_perturbation >= 0.0))
    throw ConfigError("example1 config: need N >= 1, perturbations >= 0, radius > 0, escape_perturbation >= 0");
  return o;
}

PolyOptions poly_options_from_json(const nlohmann::json& j, PolyOptions o) {
  check_keys(j, {"d", "p", "N", "noise", "gamma_eps", "train"}, "poly config");
  if (j.contains("d")) o.d = get_checked<int>(j, "d");
  if (j.contains("p")) o.p = get_checked<int>(j, "p");
  if (j.contains("N")) o.N = get_checked<Eigen::Index>(j, "N");
  if (j.contains("noise")) o.noise = get_checked<double>(j, "noise");
  if (j.contains("gamma_eps")) o.gamma_eps = get_checked<double>(j, "gamma_eps");
  if (j.contains("train")) o.train = train_config_from_json(j.at("train"), o.train);
  if (o.d < 1 || o.p < 2 || o.N < 1 || !(o.noise >= 0.0) || !(o.gamma_eps > 0.0))
    throw ConfigError("poly config: need d >= 1, p >= 2, N >= 1, noise >= 0, gamma_eps > 0");
  return o;
}

}  // namespace qlnet
