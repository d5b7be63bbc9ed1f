#include "qlnet/data.hpp"
#include "qlnet/objective.hpp"
#include "qlnet/optimize.hpp"
#include "qlnet/oracle.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace qlnet;

void BM_GradSingle(benchmark::State& state) {
  const auto d = state.range(0);
  const Dataset data = gen_planted_diagonal(d, 1500, 1);
  const AnyModel model = init_random_gaussian(d, d, 1, 2);
  ObjectiveConfig obj;
  obj.gamma = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(grad(model, data, obj));
}
BENCHMARK(BM_GradSingle)->Arg(4)->Arg(10)->Arg(20);

void BM_GradDeep(benchmark::State& state) {
  const auto h1 = state.range(0);
  const Dataset data = gen_deep_planted(4, 16, 500, 1);
  const AnyModel model = init_deep(two_layer_schedule(4, h1), 2);
  ObjectiveConfig obj;
  obj.gamma = 1.0;
  obj.penalty_mode = PenaltyMode::PerBlock;
  for (auto _ : state) benchmark::DoNotOptimize(grad(model, data, obj));
}
BENCHMARK(BM_GradDeep)->Arg(4)->Arg(16);

void BM_OracleDegree2(benchmark::State& state) {
  const Dataset data = gen_planted_dense(state.range(0), 1500, 3);
  for (auto _ : state) benchmark::DoNotOptimize(solve_oracle(data));
}
BENCHMARK(BM_OracleDegree2)->Arg(10)->Arg(20);

void BM_OracleDegree4(benchmark::State& state) {
  const Dataset data = gen_independent(state.range(0), 1000, 3);
  for (auto _ : state) benchmark::DoNotOptimize(solve_oracle(data, 4));
}
BENCHMARK(BM_OracleDegree4)->Arg(5)->Arg(8);

void BM_SymEig(benchmark::State& state) {
  const auto d = state.range(0);
  Rng rng(4);
  const Matrix B = gaussian_matrix(d, d, 1.0, rng);
  const Matrix A = B + B.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(sym_eig(A));
}
BENCHMARK(BM_SymEig)->Arg(10)->Arg(50)->Arg(121);

void BM_AdamEpochs(benchmark::State& state) {
  const Dataset data = gen_planted_diagonal(10, 1500, 1);
  ObjectiveConfig obj;
  obj.gamma = data.target_energy() / static_cast<double>(data.size()) + 1e-6;
  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.trace_stride = 100;
  for (auto _ : state) benchmark::DoNotOptimize(train(init_identity(10, 10), data, obj, cfg));
}
BENCHMARK(BM_AdamEpochs)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
