// Serial reference vs serial kernel vs OpenMP kernel for the objective and score.
#include <map>
#include <memory>

#include <benchmark/benchmark.h>

#include "odereg/estimator.hpp"
#include "odereg/likelihood.hpp"
#include "odereg/mean_ode.hpp"
#include "odereg/reference.hpp"
#include "odereg/simulate.hpp"

using namespace odereg;

namespace {

struct Problem {
    Dataset data;
    Model model;
    ParamVector theta;
};

// Setting-4 data with the flex model at its starting point, nudged off zero.
const Problem& problem(std::size_t n) {
    static std::map<std::size_t, std::unique_ptr<Problem>> cache;
    auto& slot = cache[n];
    if (!slot) {
        const TrueModel truth = setting_catalog(4);
        slot = std::make_unique<Problem>();
        slot->data = simulate_dataset(truth, n, 17);
        const StartingPoint sp = init_theta(slot->data, truth.fit_spec);
        slot->model = sp.model;
        slot->theta = sp.theta;
        const Parameterization param(sp.model);
        Eigen::VectorXd f = param.to_free(sp.theta);
        for (Eigen::Index k = 0; k < f.size(); ++k) f[k] += 0.01 * static_cast<double>(k % 5);
        slot->theta = param.to_params(f);
    }
    return *slot;
}

void BM_Reference(benchmark::State& state) {
    const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(reference::evaluate(p.data, p.model, p.theta));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void run_kernel(benchmark::State& state, Execution execution) {
    const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
    EvalRequest req;
    req.gradient = true;
    req.execution = execution;
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(p.data, p.model, p.theta, req));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_KernelSerial(benchmark::State& state) { run_kernel(state, Execution::Serial); }
void BM_KernelParallel(benchmark::State& state) { run_kernel(state, Execution::Parallel); }

void BM_SubjectScores(benchmark::State& state) {
    const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(per_subject_scores(p.data, p.model, p.theta));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MeanPaths(benchmark::State& state) {
    const Problem& p = problem(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(mean_paths(p.data, p.model, p.theta, true));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Reference)->Arg(500)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelSerial)->Arg(500)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KernelParallel)->Arg(500)->Arg(2000)->Arg(8000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_SubjectScores)->Arg(2000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MeanPaths)->Arg(2000)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
