#include <benchmark/benchmark.h>

#include "knocknet/knockoffs.hpp"
#include "knocknet/model.hpp"
#include "knocknet/rng.hpp"
#include "knocknet/simulate.hpp"

using namespace knocknet;

namespace {

Eigen::MatrixXd random_batch(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(rows, cols);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  return X;
}

ArchitectureConfig bench_arch(int p, int M, int levels) {
  ArchitectureConfig arch;
  arch.features = p;
  arch.knockoffs = M;
  arch.region_size = 5;
  arch.region_channels = 8;
  arch.covariates = 0;
  arch.head = Activation::Linear;
  arch.hierarchy_levels = levels;
  return arch;
}

}  // namespace

static void ForwardTwoLevel(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Network net(build_architecture(bench_arch(p, 5, 2)).layers);
  const ModelState model = net.init_state(1);
  const Eigen::MatrixXd X = random_batch(256, p * 6, 2);
  const Eigen::MatrixXd C(256, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(model, X, C));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(ForwardTwoLevel)->Arg(200)->Arg(1000);

static void BackpropTwoLevel(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Network net(build_architecture(bench_arch(p, 5, 2), 1e-4).layers);
  const ModelState model = net.init_state(1);
  const Eigen::MatrixXd X = random_batch(256, p * 6, 2);
  const Eigen::MatrixXd C(256, 0);
  const Eigen::VectorXd y = random_batch(256, 1, 3);
  Gradients grads = net.make_gradients();
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.backprop(model, X, C, y, LossKind::Mse, grads));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BackpropTwoLevel)->Arg(200)->Arg(1000);

static void BackpropOneLevel(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Network net(build_architecture(bench_arch(p, 5, 1)).layers);
  const ModelState model = net.init_state(1);
  const Eigen::MatrixXd X = random_batch(256, p * 6, 2);
  const Eigen::MatrixXd C(256, 0);
  const Eigen::VectorXd y = random_batch(256, 1, 3);
  Gradients grads = net.make_gradients();
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.backprop(model, X, C, y, LossKind::Mse, grads));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BackpropOneLevel)->Arg(200)->Arg(1000);

static void InputGradients(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const Network net(build_architecture(bench_arch(p, 5, 2)).layers);
  const ModelState model = net.init_state(1);
  const Eigen::MatrixXd X = random_batch(512, p * 6, 4);
  const Eigen::MatrixXd C(512, 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.input_gradients(model, X, C));
  }
  state.SetItemsProcessed(state.iterations() * 512);
}
BENCHMARK(InputGradients)->Arg(200);

static void ScitGenerate(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const GenotypeMatrix G =
      simulate_genotypes(2000, p, 0.7, log_uniform_maf(), 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(scit_generate(G.dosages, 5, 25, 7));
  }
}
BENCHMARK(ScitGenerate)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

static void FilterStats(benchmark::State& state) {
  Rng rng(11);
  ImportanceMatrix T;
  T.T.resize(state.range(0), 6);
  for (Eigen::Index i = 0; i < T.T.size(); ++i)
    T.T.data()[i] = std::fabs(rng.normal());
  T.feature_ids.resize(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(knockoff_stats(T));
  }
}
BENCHMARK(FilterStats)->Arg(200)->Arg(2000);

BENCHMARK_MAIN();
