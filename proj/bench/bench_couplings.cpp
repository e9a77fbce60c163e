// Serial versus OpenMP coupling draws, plus the unoptimized reference paths.
// The second argument of each parallel-capable benchmark is 0 (serial) or 1 (OpenMP).

#include "sqr/couplings.hpp"
#include "sqr/parallel.hpp"
#include "sqr/process_estimation.hpp"
#include "sqr/sim_lab.hpp"

#include <benchmark/benchmark.h>

using namespace sqr;

namespace {

struct Fixture {
    Dataset data;
    CoefficientProcess proc;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        DgpSpec spec;
        spec.n = 1000;
        const SimSample s = generate_dgp(spec, 1);
        BasisParams p;
        p.family = BasisFamily::CubicBSpline;
        const BasisSpec basis = make_basis(p, s.covariates);
        Fixture out;
        out.data = Dataset{s.y, design_matrix(basis, s.covariates), {}};
        out.proc = fit_process(out.data, QuantileGrid::regular(), {}, basis);
        return out;
    }();
    return f;
}

CouplingOptions options(const benchmark::State& state) {
    CouplingOptions o;
    o.parallel = state.range(1) != 0;
    return o;
}

void label(benchmark::State& state) {
    state.SetLabel(state.range(1) ? "openmp" : "serial");
    state.counters["threads"] = state.range(1) ? thread_count() : 1;
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Pivotal(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(draw_pivotal(f.proc, f.data.z, static_cast<int>(state.range(0)), 7, options(state)));
    label(state);
}

void BM_PivotalReference(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(reference::draw_pivotal(f.proc, f.data.z, static_cast<int>(state.range(0)), 7));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Gaussian(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(draw_gaussian(f.proc, static_cast<int>(state.range(0)), 7, options(state)));
    label(state);
}

void BM_GaussianReference(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state) benchmark::DoNotOptimize(reference::draw_gaussian(f.proc, static_cast<int>(state.range(0)), 7));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_WeightedBootstrap(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(draw_weighted_bootstrap(f.data, f.proc, static_cast<int>(state.range(0)), 7, options(state)));
    label(state);
}

void BM_GradientBootstrap(benchmark::State& state) {
    const Fixture& f = fixture();
    for (auto _ : state)
        benchmark::DoNotOptimize(draw_gradient_bootstrap(f.data, f.proc, static_cast<int>(state.range(0)), 7, options(state)));
    label(state);
}

}  // namespace

BENCHMARK(BM_Pivotal)->Args({500, 0})->Args({500, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PivotalReference)->Args({500, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gaussian)->Args({500, 0})->Args({500, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GaussianReference)->Args({500, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_WeightedBootstrap)->Args({10, 0})->Args({10, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradientBootstrap)->Args({10, 0})->Args({10, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
