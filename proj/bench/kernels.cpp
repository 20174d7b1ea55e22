#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "isnpg/chain.hpp"
#include "isnpg/envs.hpp"
#include "isnpg/linalg.hpp"

using namespace isnpg;

namespace {

// Channel chain bound to a random policy; window length from the range arg.
struct Fixture {
  TabularPomg model;
  InternalStateSpec spec;
  AugmentedChain chain;
  std::vector<double> x, y;

  explicit Fixture(int t_w)
      : model(build_mabc(EnvParams{})), spec(InternalStateSpec::window(model, t_w, 1000000)) {
    auto structure = std::make_shared<const ChainStructure>(ChainStructure::build(model, spec, 2000000));
    chain = bind_policy(structure, init_policy(spec, model, InitMode::random, {}, 1, 1.0));
    x.assign(chain.size(), 1.0);
    y.assign(chain.size(), 0.0);
  }
};

Fixture& fixture(int t_w) {
  static std::vector<std::unique_ptr<Fixture>> cache(4);
  if (!cache[t_w]) cache[t_w] = std::make_unique<Fixture>(t_w);
  return *cache[t_w];
}

void BM_spmv(benchmark::State& state) {
  Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    spmv(f.chain.transition, f.x, f.y);
    benchmark::DoNotOptimize(f.y.data());
  }
  state.counters["nnz"] = static_cast<double>(f.chain.transition.nnz());
}

void BM_spmv_serial(benchmark::State& state) {
  Fixture& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    spmv_serial(f.chain.transition, f.x, f.y);
    benchmark::DoNotOptimize(f.y.data());
  }
  state.counters["nnz"] = static_cast<double>(f.chain.transition.nnz());
}

void solve_with(benchmark::State& state, SolveMethod method) {
  Fixture& f = fixture(static_cast<int>(state.range(0)));
  SolveOptions opts;
  opts.method = method;
  for (auto _ : state) {
    auto r = solve_discounted(f.chain.transition, f.model.discount, f.x, false, opts);
    benchmark::DoNotOptimize(r.x.data());
  }
}

void BM_solve_iterative(benchmark::State& state) { solve_with(state, SolveMethod::iterative); }
void BM_solve_serial(benchmark::State& state) { solve_with(state, SolveMethod::serial); }
void BM_solve_krylov(benchmark::State& state) { solve_with(state, SolveMethod::krylov); }

}  // namespace

BENCHMARK(BM_spmv)->Arg(1)->Arg(2);
BENCHMARK(BM_spmv_serial)->Arg(1)->Arg(2);
BENCHMARK(BM_solve_iterative)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_solve_serial)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_solve_krylov)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
