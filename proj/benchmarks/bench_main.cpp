#include <benchmark/benchmark.h>

#include <stda/meta_trainer.hpp>
#include <stda/synth.hpp>
#include <stda/tape.hpp>

#include <random>

using namespace stda;

namespace {

DenseArray random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    DenseArray a = DenseArray::matrix(rows, cols);
    for (auto& v : a.data())
        v = d(rng);
    return a;
}

ModelConfig bench_model(std::size_t hidden)
{
    ModelConfig m;
    m.encoder.hidden = hidden;
    m.encoder.heads = 2;
    return m;
}

CityData bench_city(std::uint64_t seed)
{
    SynthConfig s;
    s.city_id = "bench" + std::to_string(seed);
    s.seed = seed;
    s.n_days = 2;
    return synth_city(s);
}

} // namespace

static void BM_MatmulForwardBackward(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    ParamSet p;
    p.add("a", random_matrix(n, n, 1));
    p.add("b", random_matrix(n, n, 2));
    for (auto _ : state) {
        p.zero_grad();
        benchmark::DoNotOptimize(
            forward_and_grad(p, [](Tape& t, const ParamVars& v) { return t.sum(t.matmul(v["a"], v["b"])); }));
    }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(32)->Arg(160)->Arg(320);

static void BM_StEmbedForward(benchmark::State& state)
{
    const auto model = bench_model(static_cast<std::size_t>(state.range(0)));
    const auto city = bench_city(3);
    const auto theta = init_theta(model, 1);
    const auto w = sample_windows(city.series, model.history, model.horizon, city.series.full_range(), 8, 1);
    for (auto _ : state)
        benchmark::DoNotOptimize(task_loss(theta, w, city.graph, model));
}
BENCHMARK(BM_StEmbedForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_StEmbedForwardBackward(benchmark::State& state)
{
    const auto model = bench_model(static_cast<std::size_t>(state.range(0)));
    const auto city = bench_city(3);
    auto theta = init_theta(model, 1);
    const auto w = sample_windows(city.series, model.history, model.horizon, city.series.full_range(), 8, 1);
    for (auto _ : state) {
        theta.zero_grad();
        benchmark::DoNotOptimize(forward_and_grad(theta, [&](Tape& t, const ParamVars& p) {
            return task_loss(t, p, w, city.graph, model, LossForm::Rmse);
        }));
    }
}
BENCHMARK(BM_StEmbedForwardBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_MetaStep(benchmark::State& state)
{
    const auto model = bench_model(16);
    const TrainingData data({bench_city(1), bench_city(2)}, bench_city(3), 1, model);
    MetaConfig cfg;
    cfg.meta_steps = static_cast<int>(state.range(0));
    cfg.adapt_steps = 0;
    cfg.patience = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(train_variant(Variant::Full, data, model, cfg));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MetaStep)->Arg(5)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
