// qlnet: experiment driver (sweeps, spurious point, scaling check, poly, MNIST, oracle).

#include "qlnet/harness.hpp"
#include "qlnet/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace qlnet;

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool fast = false;
  std::optional<int> workers;
  bool strict = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Master seed (overrides the config)");
  sub->add_option("--out", c.out, "Output directory");
  sub->add_flag("--fast", c.fast, "Reduced epoch budget");
  sub->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--strict", c.strict, "Exit with status 3 if any run diverged");
}

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json(const std::string& dir, const std::string& name, const json& j) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name);
  if (!out) throw FormatError("cannot write " + (std::filesystem::path(dir) / name).string());
  out << j.dump(2) << '\n';
}

void fast_train(TrainConfig& t) {
  t.max_epochs = std::min<long>(t.max_epochs, 5000);
  t.trace_stride = std::max<long>(t.trace_stride, 100);
}

int cmd_sweep(const Common& c) {
  SweepConfig cfg = sweep_config_from_json(read_json_file(c.config));
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.out.empty()) cfg.out = c.out;
  if (c.fast) apply_fast_mode(cfg);
  cfg.validate();
  const SweepReport r = run_sweep(cfg);
  std::cout << sweep_csv(r);
  std::cerr << r.summary().dump(2) << '\n';
  return c.strict && r.diverged > 0 ? kExitDiverged : 0;
}

int cmd_example1(const Common& c, const std::vector<int>& dims, int seeds) {
  Example1Options opts = example1_options_from_json(read_json_file(c.config));
  if (c.fast) fast_train(opts.escape_train);
  const std::uint64_t base = c.seed.value_or(0);
  json rows = json::array();
  std::printf("d,seed,grad_norm,loss,loss_star,s_min_eig,min_perturbation_delta,tag,escaped_loss,escape_gap\n");
  for (int d : dims)
    for (int s = 0; s < seeds; ++s) {
      const std::uint64_t seed = derive_seed(base, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(s));
      const Example1Result r = run_example1_case(d, seed, opts);
      std::printf("%d,%llu,%.10g,%.10g,%.10g,%.10g,%.10g,%s,%.10g,%.10g\n", d, static_cast<unsigned long long>(seed),
                  r.grad_norm, r.loss, r.loss_star, r.s_min_eig, r.min_perturbation_delta,
                  to_string(r.classification.tag).c_str(), r.escaped_loss, r.escape_gap);
      rows.push_back({{"d", d},
                      {"seed", seed},
                      {"grad_norm", r.grad_norm},
                      {"loss", r.loss},
                      {"loss_star", r.loss_star},
                      {"s_min_eig", r.s_min_eig},
                      {"min_perturbation_delta", r.min_perturbation_delta},
                      {"classification", point_class_to_json(r.classification)},
                      {"escaped_loss", r.escaped_loss},
                      {"escape_gap", r.escape_gap}});
    }
  write_json(c.out, "example1.json", rows);
  return 0;
}

int cmd_scaling(const Common& c, int d, Eigen::Index N, int k, const std::vector<double>& betas, long T, double eta_Q,
                double eta_lambda) {
  const std::uint64_t seed = c.seed.value_or(0);
  const Dataset data = gen_planted_dense(d, N, seed);
  const QLLayer model0 = init_random_gaussian(d, k, 1, derive_seed(seed, 1), -1.0, 0.1);
  json rows = json::array();
  std::printf("beta,max_rel_deviation\n");
  for (double beta : betas) {
    const double dev = scaled_trajectory_check(model0, data, beta, eta_Q, eta_lambda, T);
    std::printf("%.10g,%.10g\n", beta, dev);
    rows.push_back({{"beta", beta}, {"max_rel_deviation", dev}});
  }
  write_json(c.out, "scaling_check.json", {{"d", d}, {"N", N}, {"k", k}, {"T", T}, {"seed", seed}, {"rows", rows}});
  return 0;
}

int cmd_poly(const Common& c, int seeds) {
  PolyOptions opts = poly_options_from_json(read_json_file(c.config));
  if (c.fast) fast_train(opts.train);
  const std::uint64_t base = c.seed.value_or(0);
  json rows = json::array();
  int diverged = 0;
  std::printf("seed,loss,loss_star,rel_gap,penalty,gamma,diverged\n");
  for (int s = 0; s < seeds; ++s) {
    const PolyResult r = run_poly_case(base + static_cast<std::uint64_t>(s), opts);
    diverged += r.diverged;
    std::printf("%llu,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n", static_cast<unsigned long long>(r.seed), r.loss,
                r.loss_star, r.rel_gap, r.penalty, r.gamma, static_cast<int>(r.diverged));
    rows.push_back({{"seed", r.seed},
                    {"loss", r.loss},
                    {"loss_star", r.loss_star},
                    {"rel_gap", r.rel_gap},
                    {"penalty", r.penalty},
                    {"gamma", r.gamma},
                    {"diverged", r.diverged}});
  }
  write_json(c.out, "poly.json", rows);
  return c.strict && diverged > 0 ? kExitDiverged : 0;
}

int cmd_mnist(const Common& c, const std::string& data_dir, const std::vector<std::pair<int, int>>& pairs) {
  MnistConfig cfg = mnist_config_from_json(read_json_file(c.config));
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (c.fast) fast_train(cfg.train);
  if (!mnist_files_present(data_dir)) {
    std::cerr << "mnist: IDX files not found under " << data_dir << '\n';
    return kExitConfig;
  }
  json reports = json::array();
  bool diverged = false;
  for (const auto& pair : pairs) {
    const MnistTask task = load_mnist_task(data_dir, pair, cfg.seed);
    const MnistReport r = report_mnist(task, cfg);
    const json j = r.to_json();
    std::cout << j.dump(2) << '\n';
    for (const auto& row : r.rows) diverged = diverged || !std::isfinite(row.avg_train_nmse);
    reports.push_back(j);
  }
  write_json(c.out, "mnist.json", reports);
  return c.strict && diverged ? kExitDiverged : 0;
}

int cmd_oracle(const Common& c, const std::string& data_path, int degree, bool include_norm) {
  const Dataset data = data_path.size() > 5 && data_path.substr(data_path.size() - 5) == ".json"
                           ? dataset_from_json(read_json_file(data_path))
                           : read_dataset_csv(data_path);
  const OracleSolution sol = solve_oracle(data, degree, include_norm);
  json j = oracle_to_json(sol);
  j["nmse_star"] = oracle_nmse(sol, data);
  std::cout << j.dump(2) << '\n';
  write_json(c.out, "oracle.json", j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadratic-linear network experiments"};
  app.require_subcommand(1);

  Common common;
  auto* sweep = app.add_subcommand("sweep", "Width sweep (single-layer k or deep h1)");
  add_common(sweep, common);

  auto* ex1 = app.add_subcommand("example1", "Spurious stationary point construction and escape");
  add_common(ex1, common);
  std::vector<int> ex_dims{2, 3, 4, 5, 6};
  int ex_seeds = 10;
  ex1->add_option("--dims", ex_dims, "Input dimensions, e.g. --dims 2,3,4")->delimiter(',');
  ex1->add_option("--seeds", ex_seeds, "Seeds per dimension")->check(CLI::PositiveNumber);

  auto* scaling = app.add_subcommand("scaling-check", "Step-size scaling invariance of GD trajectories");
  add_common(scaling, common);
  int sc_d = 3, sc_k = 3;
  Eigen::Index sc_N = 100;
  long sc_T = 100;
  std::vector<double> sc_betas{0.5, 2.0};
  double sc_eta_Q = 1e-3, sc_eta_l = 1e-3;
  scaling->add_option("--d", sc_d)->check(CLI::PositiveNumber);
  scaling->add_option("--k", sc_k)->check(CLI::PositiveNumber);
  scaling->add_option("--N", sc_N)->check(CLI::PositiveNumber);
  scaling->add_option("--steps", sc_T, "GD steps T")->check(CLI::PositiveNumber);
  scaling->add_option("--beta", sc_betas, "Scale factors");
  scaling->add_option("--eta-q", sc_eta_Q)->check(CLI::PositiveNumber);
  scaling->add_option("--eta-lambda", sc_eta_l)->check(CLI::PositiveNumber);

  auto* poly = app.add_subcommand("poly", "Polynomial-linear layer against the monomial oracle");
  add_common(poly, common);
  int poly_seeds = 10;
  poly->add_option("--seeds", poly_seeds)->check(CLI::PositiveNumber);

  auto* mnist = app.add_subcommand("mnist", "Binary MNIST tasks with deep QL networks");
  add_common(mnist, common);
  std::string mnist_dir = "data/mnist";
  std::vector<std::pair<int, int>> pairs{{3, 8}, {4, 7}};
  mnist->add_option("--data-dir", mnist_dir, "Directory with the four IDX files");
  mnist->add_option("--pair", pairs, "Digit pair, e.g. --pair 3,8 (repeatable)")->delimiter(',');

  auto* oracle = app.add_subcommand("oracle", "Least-squares oracle for a dataset file");
  add_common(oracle, common);
  std::string oracle_data;
  int degree = 2;
  bool include_norm = false;
  oracle->add_option("--data", oracle_data, "Dataset CSV (x*, y* columns) or JSON")->required()->check(CLI::ExistingFile);
  oracle->add_option("--degree", degree)->check(CLI::Range(2, 8));
  oracle->add_flag("--include-norm", include_norm, "Add the ||x||^2 feature");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sweep) return cmd_sweep(common);
    if (*ex1) return cmd_example1(common, ex_dims, ex_seeds);
    if (*scaling) return cmd_scaling(common, sc_d, sc_N, sc_k, sc_betas, sc_T, sc_eta_Q, sc_eta_l);
    if (*poly) return cmd_poly(common, poly_seeds);
    if (*mnist) return cmd_mnist(common, mnist_dir, pairs);
    if (*oracle) return cmd_oracle(common, oracle_data, degree, include_norm);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
