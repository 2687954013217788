// Serial reference vs OpenMP kernel for greedy evaluation and value iteration.
#include <benchmark/benchmark.h>

#include "mango/learning.hpp"
#include "mango/trainer.hpp"

namespace {

using namespace mango;

GridMap bench_map(int size) {
    EnvConfig env;
    env.map_size = size;
    env.hole_density = 0.2;
    return generate_map(env, 7);
}

// Trained tables are not needed to time the rollout loop; random values give
// episodes that wander until the step limit.
PolicySet noisy_policies(int layers, int size) {
    PolicySet set(layers, size);
    Rng rng(11);
    for (int layer = 1; layer <= set.top_layer(); ++layer)
        for (OptionId id : set.owners(layer)) {
            PolicyTable& t = set.table(id);
            for (std::size_t key = 0; key < t.num_keys(); ++key)
                for (int a = 0; a < kNumExpandedActions; ++a) t.set(key, a, rng.uniform());
        }
    return set;
}

template <bool Parallel>
void BM_Evaluate(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const GridMap map = bench_map(size);
    EnvConfig env;
    env.map_size = size;
    env.step_limit = size * size;
    const AbstractionHierarchy h(size, 2);
    const PolicySet policies = noisy_policies(2, size);
    for (auto _ : state) {
        const MetricsRow row = Parallel ? evaluate(policies, {map}, 200, env, h, 3)
                                        : evaluate_serial(policies, {map}, 200, env, h, 3);
        benchmark::DoNotOptimize(row);
    }
}
BENCHMARK(BM_Evaluate<false>)->Name("evaluate/serial")->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Evaluate<true>)->Name("evaluate/openmp")->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

template <bool Parallel>
void BM_ValueIteration(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const GridMap map = bench_map(size);
    Pos goal = map.pos(map.placeable().front());
    for (auto _ : state) {
        auto v = value_iteration_oracle(map, goal, 0.95, RewardSpec{}, Parallel);
        benchmark::DoNotOptimize(v);
    }
}
BENCHMARK(BM_ValueIteration<false>)->Name("value_iteration/serial")->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ValueIteration<true>)->Name("value_iteration/openmp")->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
