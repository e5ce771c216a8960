#include <benchmark/benchmark.h>

#include <random>

#include "sphalign/align.hpp"
#include "sphalign/energy.hpp"
#include "sphalign/sim.hpp"
#include "sphalign/warp.hpp"

using namespace sphalign;

namespace {

// Arguments: grid level, endpoint count.
void BM_KdeEstimate(benchmark::State& state) {
  const auto layout = make_layout(static_cast<int>(state.range(0)));
  const auto pts = sample_ground_truth({}, static_cast<std::size_t>(state.range(1)), 1);
  const KdeEngine engine(layout, make_kernel_spec(0.005));
  DensityGrid f;
  for (auto _ : state) {
    engine.estimate(pts, f);
    benchmark::DoNotOptimize(f.slots().raw().data());
  }
  state.SetItemsProcessed(state.iterations() * pts.size());
}
BENCHMARK(BM_KdeEstimate)->Args({3, 20000})->Args({4, 20000})->Unit(benchmark::kMillisecond);

void BM_EndpointGradient(benchmark::State& state) {
  const auto layout = make_layout(static_cast<int>(state.range(0)));
  const auto inst = make_synthetic_instance({}, static_cast<std::size_t>(state.range(1)), {}, 2);
  const KdeEngine engine(layout, make_kernel_spec(0.005));
  DensityGrid f;
  engine.estimate(inst.fixed, f);
  const QGrid q1 = q_transform(f);
  engine.estimate(inst.moving, f);
  const TangentBasis& basis = shared_basis(8);
  for (auto _ : state) benchmark::DoNotOptimize(endpoint_energy_gradient(q1, f, inst.moving, engine, basis));
}
BENCHMARK(BM_EndpointGradient)->Args({3, 20000})->Args({4, 20000})->Unit(benchmark::kMillisecond);

void BM_GroupAction(benchmark::State& state) {
  const auto layout = make_layout(static_cast<int>(state.range(0)));
  const QGrid q = q_transform(sim_density_grid({}, layout));
  const WarpGrid w = warp_grid(random_diffeomorphism({}).warp, layout);
  for (auto _ : state) benchmark::DoNotOptimize(apply_group_action(q, w));
}
BENCHMARK(BM_GroupAction)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_LocateFace(benchmark::State& state) {
  const auto mesh = build_icosphere(static_cast<int>(state.range(0)));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<Vec3> pts(4096);
  for (auto& p : pts) p = Vec3(n(rng), n(rng), n(rng)).normalized();
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(mesh.locate_face(pts[i++ & 4095]));
}
BENCHMARK(BM_LocateFace)->Arg(4)->Arg(6);

void BM_ApplyIncrement(benchmark::State& state) {
  auto pts = sample_ground_truth({}, 20000, 4);
  const auto warp = random_diffeomorphism({});
  for (auto _ : state) apply_increment(warp.warp.increments.front(), pts);
  state.SetItemsProcessed(state.iterations() * pts.size());
}
BENCHMARK(BM_ApplyIncrement)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
