#include <doctest.h>

#include <oracles.hpp>

#include <stda/errors.hpp>
#include <stda/eval_metrics.hpp>
#include <stda/inference_head.hpp>
#include <stda/synth.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace stda;
using namespace stda::testing;

namespace {

ModelConfig tiny_model()
{
    ModelConfig m;
    m.encoder.hidden = 4;
    m.encoder.heads = 1;
    m.encoder.mode = SandwichMode::FinalState;
    m.history = 4;
    m.horizon = 2;
    return m;
}

MetaConfig tiny_meta()
{
    MetaConfig c;
    c.task_batch = 2;
    c.support_size = 3;
    c.query_size = 3;
    c.target_batch = 2;
    c.meta_steps = 3;
    c.adapt_steps = 2;
    c.adapt_batch = 4;
    c.patience = 1000;
    return c;
}

CityData tiny_city(const std::string& id, std::uint64_t seed)
{
    SynthConfig s;
    s.city_id = id;
    s.seed = seed;
    s.n_nodes = 4;
    s.n_days = 2;
    s.radius = 0.8;
    return synth_city(s);
}

Normalizer identity_normalizer(std::size_t n) { return Normalizer{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

} // namespace

TEST_SUITE("eval_metrics")
{
    TEST_CASE("mae and rmse examples")
    {
        const std::vector<double> truth{1, 2, 3}, pred{2, 2, 5};
        CHECK(mae(truth, pred) == 1.0);
        CHECK(rmse(truth, pred) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
        CHECK(mae(truth, truth) == 0.0);
        CHECK(rmse(truth, truth) == 0.0);
    }

    TEST_CASE("metrics honour the mask")
    {
        const std::vector<double> truth{1, 2, 3}, pred{2, 100, 5}, mask{1, 0, 1};
        CHECK(mae(truth, pred, mask) == 1.5);
        CHECK(rmse(truth, pred, mask) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
        const std::vector<double> none{0, 0, 0};
        CHECK_THROWS_AS(mae(truth, pred, none), MetricError);
        CHECK_THROWS_AS(rmse(truth, pred, none), MetricError);
        CHECK_THROWS_AS(mae(std::vector<double>{}, std::vector<double>{}), MetricError);
        CHECK_THROWS_AS(mae(truth, std::vector<double>{1, 2}), ContractError);
    }

    TEST_CASE("homogeneity, symmetry and rmse bounds mae")
    {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> u(-5.0, 5.0);
            std::vector<double> a(17), b(17);
            for (auto& v : a)
                v = u(rng);
            for (auto& v : b)
                v = u(rng);
            const double c = 0.5 + std::abs(u(rng));
            std::vector<double> ca(a), cb(b);
            for (auto& v : ca)
                v *= c;
            for (auto& v : cb)
                v *= c;
            CHECK(mae(ca, cb) == doctest::Approx(c * mae(a, b)).epsilon(1e-12));
            CHECK(rmse(ca, cb) == doctest::Approx(c * rmse(a, b)).epsilon(1e-12));
            CHECK(mae(a, b) == mae(b, a));
            CHECK(rmse(a, b) >= mae(a, b));
            CHECK(std::abs(mae(a, b) - mae_oracle(a, b)) <= 1e-12);
            CHECK(std::abs(rmse(a, b) - rmse_oracle(a, b)) <= 1e-12);
        }
    }

    TEST_CASE("horizon report labels and counts")
    {
        const auto city = tiny_city("t", 5);
        const auto w = make_windows(city.series, 12, 6, city.series.full_range(), 50);
        const auto norm = identity_normalizer(4);
        DenseArray pred = DenseArray::matrix(w.size() * 4, 6);
        const auto rep = horizon_report(pred, w, norm, kDefaultHorizons, 5);
        REQUIRE(rep.rows.size() == 3);
        CHECK(rep.rows[0].step == 1);
        CHECK(rep.rows[0].minutes == 5);
        CHECK(rep.rows[1].minutes == 15);
        CHECK(rep.rows[2].minutes == 30);
        for (const auto& r : rep.rows) {
            CHECK(r.n == w.size() * 4);
            CHECK(r.rmse >= r.mae);
        }
        const std::size_t bad[] = {7};
        CHECK_THROWS_AS(horizon_report(pred, w, norm, bad, 5), ContractError);
        const std::size_t zero[] = {0};
        CHECK_THROWS_AS(horizon_report(pred, w, norm, zero, 5), ContractError);
        CHECK_THROWS_AS(horizon_report(DenseArray::matrix(3, 6), w, norm, kDefaultHorizons, 5), ContractError);
    }

    TEST_CASE("single window counts one entry per node")
    {
        const auto city = tiny_city("t", 6);
        const auto w = make_windows(city.series, 12, 6, TimeRange{0, 18});
        REQUIRE(w.size() == 1);
        const auto rep =
            horizon_report(DenseArray::matrix(4, 6), w, identity_normalizer(4), kDefaultHorizons, 5);
        for (const auto& r : rep.rows)
            CHECK(r.n == 4);
    }

    TEST_CASE("metrics are invariant to node order")
    {
        std::mt19937_64 rng(9);
        const auto city = tiny_city("t", 7);
        const auto w = make_windows(city.series, 4, 3, city.series.full_range(), 40);
        const std::size_t n = 4, b = w.size();
        const auto pred = random_matrix(b * n, 3, rng, 40, 60);
        const auto norm = identity_normalizer(n);
        const std::size_t hs[] = {1, 2, 3};
        const auto base = horizon_report(pred, w, norm, hs, 5);

        const std::vector<std::size_t> perm{2, 0, 3, 1};
        WindowBatch pw = w;
        DenseArray pp = pred;
        for (std::size_t k = 0; k < b; ++k)
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t m = 0; m < 3; ++m) {
                    const auto from = (k * 3 + m) * n + i, to = (k * 3 + m) * n + perm[i];
                    pw.targets[to] = w.targets[from];
                    pw.mask[to] = w.mask[from];
                    pp(k * n + perm[i], m) = pred(k * n + i, m);
                }
            }
        const auto permuted = horizon_report(pp, pw, norm, hs, 5);
        for (std::size_t r = 0; r < 3; ++r) {
            CHECK(permuted.rows[r].mae == doctest::Approx(base.rows[r].mae).epsilon(1e-12));
            CHECK(permuted.rows[r].rmse == doctest::Approx(base.rows[r].rmse).epsilon(1e-12));
        }
    }

    TEST_CASE("de-normalization scales errors by the node deviation")
    {
        std::mt19937_64 rng(4);
        const auto city = tiny_city("t", 8);
        SpeedSeries one = city.series;
        one.node_ids.resize(1);
        one.values = DenseArray::matrix(city.series.steps(), 1);
        one.valid.assign(city.series.steps(), 1);
        for (std::size_t t = 0; t < one.steps(); ++t)
            one.values(t, 0) = city.series.values(t, 0);
        const auto norm = fit_normalizer(one, one.full_range());
        const auto w = make_windows(norm.apply(one), 4, 2, one.full_range(), 10);
        const auto pred = random_matrix(w.size(), 2, rng);
        const std::size_t hs[] = {1, 2};
        const auto rep = horizon_report(pred, w, norm, hs, 5);
        for (const auto& r : rep.rows) {
            CHECK(std::abs(r.mae - r.mae_norm * norm.std[0]) <= 1e-8);
            CHECK(std::abs(r.rmse - r.rmse_norm * norm.std[0]) <= 1e-8);
        }
    }

    TEST_CASE("constant-mean predictor on a clean sinusoid")
    {
        SynthConfig s;
        s.city_id = "sine";
        s.n_nodes = 3;
        s.n_days = 2;
        s.seed = 21;
        s.noise_std = 0.0;
        s.wave_rate = 0.0;
        const auto city = synth_city(s);
        const auto model = tiny_model();
        const TrainingData data({}, city, 1, model);
        auto theta = init_theta(model, 1);
        theta.value("head.W").fill(0.0);
        theta.value("head.b").fill(0.0);
        const auto rep = evaluate_target(theta, data, model, std::vector<std::size_t>{1, 2});
        const double expected = s.diurnal_amplitude / std::sqrt(2.0);
        for (const auto& r : rep.rows)
            CHECK(std::abs(r.rmse - expected) <= 0.02 * expected);
        CHECK_FALSE(rep.zero_shot);
    }

    TEST_CASE("mean and population deviation")
    {
        const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
        const auto ms = mean_std(v);
        CHECK(ms.mean == 5.0);
        CHECK(ms.std == 2.0);
        CHECK(mean_std(std::vector<double>{3.0}).std == 0.0);
        CHECK_THROWS_AS(mean_std(std::vector<double>{}), MetricError);
    }

    TEST_CASE("interior minimum")
    {
        CHECK(interior_minimum(std::vector<double>{3, 1, 2}));
        CHECK(interior_minimum(std::vector<double>{3, 2, 1, 2}));
        CHECK_FALSE(interior_minimum(std::vector<double>{1, 2, 3}));
        CHECK_FALSE(interior_minimum(std::vector<double>{3, 2, 1}));
        CHECK_FALSE(interior_minimum(std::vector<double>{1, 2}));
        CHECK_FALSE(interior_minimum(std::vector<double>{}));
    }

    TEST_CASE("lambda sweep table and single-point reduction")
    {
        const auto model = tiny_model();
        const std::vector<std::size_t> hs{1, 2};
        const TrainingData data({tiny_city("a", 1), tiny_city("b", 2)}, tiny_city("t", 3), 1, model);
        const auto meta = tiny_meta();
        const std::uint64_t seeds[] = {4};
        const std::vector<double> lambdas{0.0, 0.5, 1.5, 3.0};
        std::size_t calls = 0;
        const auto sweep = lambda_sweep(lambdas, seeds, data, model, meta, hs, 5,
                                        [&](const SweepPoint&) { ++calls; });
        REQUIRE(sweep.table.size() == 4);
        CHECK(calls == 4);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(sweep.table[k].lambda == lambdas[k]);
            CHECK(std::isfinite(sweep.table[k].mae));
            CHECK(sweep.table[k].rmse >= sweep.table[k].mae);
        }

        const std::vector<double> one{1.5};
        const auto single = lambda_sweep(one, seeds, data, model, meta, hs, 5);
        MetaConfig cfg = meta;
        cfg.lambda = 1.5;
        cfg.seed = 4;
        const auto state = run_variant(Variant::Full, data, model, cfg);
        const auto direct = evaluate_target(state.theta, data, model, hs, 5);
        REQUIRE(single.table.size() == 1);
        CHECK(single.table[0].mae == direct.mean_mae());
        CHECK(single.table[0].rmse == direct.mean_rmse());
        CHECK(single.table[0].mae == sweep.table[2].mae);

        CHECK_THROWS_AS(lambda_sweep(std::vector<double>{}, seeds, data, model, meta), ConfigError);
        CHECK_THROWS_AS(lambda_sweep(std::vector<double>{-1.0}, seeds, data, model, meta), ConfigError);
    }
}
