#include <benchmark/benchmark.h>

#include <random>

#include "otfit/costs.hpp"
#include "otfit/netcore.hpp"
#include "otfit/oracle.hpp"
#include "otfit/potential.hpp"
#include "otfit/sampler.hpp"

using namespace otfit;

namespace {

PointSet gaussian_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> n01;
  PointSet p(n, dim);
  for (auto& v : p.data()) v = n01(rng);
  return p;
}

// args: targets N, dimension D
void BM_CTransformBatch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<std::size_t>(state.range(1));
  const Dataset ys(gaussian_points(n, dim, 1), "targets");
  const PointSet xs = gaussian_points(64, dim, 2);
  const std::vector<double> psi(n, 0.0);
  const CostSpec spec(Metric::L2, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(c_transform_batch(spec, xs, ys, psi));
  state.SetItemsProcessed(state.iterations() * 64 * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_CTransformBatch)->Args({500, 2})->Args({1000, 784})->Args({5000, 2});

void BM_OtsSteps(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Dataset ys(gaussian_points(n, 2, 3), "targets");
  const PushforwardSampler mu(LatentSource::uniform_box(2, -1.0, 1.0));
  OtsConfig c;
  c.learning_rate = 0.05;
  c.max_steps = 1000;
  c.histogram_tolerance = 1e-6;
  c.plateau_tolerance = 0.0;
  c.memorize = false;
  for (auto _ : state) {
    Rng rng = make_rng(4);
    benchmark::DoNotOptimize(ots_solve(CostSpec(Metric::L2, 2.0), mu, ys, c, rng));
  }
  state.SetItemsProcessed(state.iterations() * c.max_steps);
}
BENCHMARK(BM_OtsSteps)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

// args: batch size, hidden width
void BM_MlpForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const int width = static_cast<int>(state.range(1));
  Rng rng = make_rng(5);
  const std::vector<int> widths{16, width, width, 784};
  const Mlp g = Mlp::xavier(widths, rng);
  const Eigen::MatrixXf z = Eigen::MatrixXf::Random(16, batch);
  const Eigen::MatrixXf up = Eigen::MatrixXf::Random(784, batch);
  GradientBuffer grads(g);
  ForwardTape tape;
  for (auto _ : state) {
    grads.clear();
    benchmark::DoNotOptimize(g.forward(z, tape));
    g.backward(tape, up, grads);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Args({64, 256})->Args({256, 256});

void BM_ExactOtCost(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto a = DiscreteMeasure::uniform(gaussian_points(m, 2, 6));
  const auto b = DiscreteMeasure::uniform(gaussian_points(8, 2, 7));
  for (auto _ : state) benchmark::DoNotOptimize(exact_ot_cost(CostSpec(Metric::L2, 2.0), a, b));
}
BENCHMARK(BM_ExactOtCost)->Arg(50)->Arg(200)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
