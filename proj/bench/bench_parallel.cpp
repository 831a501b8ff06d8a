// Serial reference vs OpenMP paths for the three parallel kernels.

#include <random>

#include <benchmark/benchmark.h>

#include "locker/forest.hpp"
#include "locker/pipeline.hpp"

using namespace locker;

namespace {

struct Data {
  Matrix<double> x;
  std::vector<double> y;
};

const Data& regression_data() {
  static const Data d = [] {
    Data out{Matrix<double>(4000, 11), std::vector<double>(4000)};
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    for (std::size_t i = 0; i < out.y.size(); ++i) {
      for (std::size_t j = 0; j < out.x.cols(); ++j) out.x(i, j) = std::floor(u(rng));
      out.y[i] = out.x(i, 0) + 0.5 * out.x(i, 3) - 0.2 * out.x(i, 7) + u(rng) / 4.0;
    }
    return out;
  }();
  return d;
}

Execution exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Execution::Serial : Execution::Parallel; }

void label(benchmark::State& state) { state.SetLabel(state.range(0) == 0 ? "serial" : "parallel"); }

void BM_ForestTraining(benchmark::State& state) {
  const auto& d = regression_data();
  for (auto _ : state) {
    benchmark::DoNotOptimize(Forest::train_regression(d.x, d.y, {100, 8, 2, 3}, 3, exec_of(state)));
  }
  label(state);
}

void BM_BatchPrediction(benchmark::State& state) {
  const auto& d = regression_data();
  static const auto forest = Forest::train_regression(d.x, d.y, {100, 8, 2, 3}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(forest.predict_batch(d.x, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.x.rows()));
  label(state);
}

struct Fixture {
  PipelineInputs inputs;
  PipelineConfig config;
  std::vector<LockerModels> models;
};

const Fixture& pipeline_fixture() {
  static const Fixture f = [] {
    Fixture out;
    const auto suite = make_benchmark_suite(1, 6);
    out.inputs = inputs_from_suite(suite);
    out.config.run_date = suite.history_end;
    out.config.window_first = suite.window_first;
    out.config.window_last = suite.window_last;
    out.models = train_models(out.inputs, out.config);
    return out;
  }();
  return f;
}

// Plan and replay three policies for every locker.
void BM_PerLockerFanOut(benchmark::State& state) {
  const auto& f = pipeline_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(simulate_all(f.inputs, f.models, f.config, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.inputs.lockers.size()));
  label(state);
}

}  // namespace

BENCHMARK(BM_ForestTraining)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchPrediction)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PerLockerFanOut)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
