#include <doctest.h>

#include <oracles.hpp>

#include <stda/errors.hpp>
#include <stda/inference_head.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace stda;
using namespace stda::testing;

namespace {

ParamSet head(std::size_t width, std::size_t horizon, std::uint64_t seed)
{
    ParamSet p;
    init_head(p, width, horizon, seed);
    return p;
}

DenseArray ones_like(const DenseArray& a) { return DenseArray(a.shape(), 1.0); }

} // namespace

TEST_SUITE("inference_head")
{
    TEST_CASE("zero weights predict the bias")
    {
        auto p = head(4, 3, 1);
        p.value("head.W").fill(0.0);
        p.value("head.b") = DenseArray::matrix(1, 3, {0.5, -1.0, 2.0});
        std::mt19937_64 rng(1);
        const auto out = predict(StEmbedding{random_matrix(5, 4, rng), EmbeddingStage::SpatioTemporal}, p);
        CHECK(out.rows() == 5);
        for (std::size_t r = 0; r < 5; ++r)
            CHECK(std::vector<double>{out(r, 0), out(r, 1), out(r, 2)} == std::vector<double>{0.5, -1.0, 2.0});
    }

    TEST_CASE("single-step head gives one value per node")
    {
        std::mt19937_64 rng(2);
        const auto out = predict(StEmbedding{random_matrix(7, 3, rng), EmbeddingStage::SpatioTemporal}, head(3, 1, 2));
        CHECK(out.rows() == 7);
        CHECK(out.cols() == 1);
    }

    TEST_CASE("prediction matches an explicit matrix product")
    {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            std::mt19937_64 rng(seed);
            const auto p = head(3, 2, seed);
            const auto z = random_matrix(4, 3, rng);
            const auto out = predict(StEmbedding{z, EmbeddingStage::SpatioTemporal}, p);
            for (std::size_t r = 0; r < 4; ++r)
                for (std::size_t m = 0; m < 2; ++m) {
                    double v = p.value("head.b")[m];
                    for (std::size_t k = 0; k < 3; ++k)
                        v += z(r, k) * p.value("head.W")(k, m);
                    CHECK(std::abs(out(r, m) - v) <= 1e-12);
                }
        }
    }

    TEST_CASE("prediction requires a spatio-temporal embedding")
    {
        CHECK_THROWS_AS(predict(StEmbedding{DenseArray::matrix(2, 3), EmbeddingStage::Temporal}, head(3, 2, 0)),
                        ContractError);
        CHECK_THROWS_AS(predict(StEmbedding{DenseArray::matrix(2, 4), EmbeddingStage::SpatioTemporal}, head(3, 2, 0)),
                        ContractError);
    }

    TEST_CASE("prediction loss examples")
    {
        const auto truth = DenseArray::matrix(1, 3, {1, 2, 3});
        const auto mask = ones_like(truth);
        CHECK(prediction_loss(truth, truth, mask) == 0.0);
        CHECK(prediction_loss(DenseArray::matrix(1, 3, {2, 2, 5}), truth, mask)
              == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
        CHECK(prediction_loss(DenseArray::matrix(1, 3, {2, 2, 5}), truth, mask, LossForm::Mse)
              == doctest::Approx(5.0 / 3.0).epsilon(1e-15));
        CHECK(prediction_loss(DenseArray::matrix(1, 3, {-1.5, -0.5, 0.5}), truth, mask)
              == doctest::Approx(2.5).epsilon(1e-15));
    }

    TEST_CASE("prediction loss honours the mask")
    {
        const auto truth = DenseArray::matrix(2, 2, {1, 2, 3, 4});
        const auto pred = DenseArray::matrix(2, 2, {1, 100, 5, 4});
        const auto mask = DenseArray::matrix(2, 2, {1, 0, 1, 1});
        CHECK(prediction_loss(pred, truth, mask) == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-15));
        CHECK_THROWS_AS(prediction_loss(pred, truth, DenseArray::matrix(2, 2)), ContractError);
        CHECK_THROWS_AS(prediction_loss(pred, DenseArray::matrix(1, 4), mask), ContractError);
    }

    TEST_CASE("prediction loss symmetry and permutation invariance")
    {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(seed);
            const auto a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
            const auto mask = ones_like(a);
            CHECK(prediction_loss(a, b, mask) == prediction_loss(b, a, mask));
            std::vector<std::size_t> perm(12);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::shuffle(perm.begin(), perm.end(), rng);
            DenseArray pa = a, pb = b;
            for (std::size_t k = 0; k < 12; ++k) {
                pa[perm[k]] = a[k];
                pb[perm[k]] = b[k];
            }
            CHECK(std::abs(prediction_loss(pa, pb, mask) - prediction_loss(a, b, mask)) <= 1e-14);
        }
    }

    TEST_CASE("tape prediction loss gradient")
    {
        std::mt19937_64 rng(3);
        ParamSet p;
        p.add("pred", random_matrix(4, 3, rng));
        const auto truth = random_matrix(4, 3, rng);
        auto mask = ones_like(truth);
        mask[5] = 0.0;
        for (auto form : {LossForm::Rmse, LossForm::Mse})
            CHECK(finite_difference_check(p, [&](Tape& t, const ParamVars& v) {
                      return prediction_loss(t, v["pred"], truth, mask, form);
                  }).worst_rel
                  < 1e-4);
    }

    TEST_CASE("overall loss")
    {
        const auto r = overall_loss(1.0, 0.2, 1.5);
        CHECK(r.l_overall == doctest::Approx(1.3).epsilon(1e-15));
        CHECK(r.l_p == 1.0);
        CHECK(r.l_st == 0.2);
        CHECK(r.lambda == 1.5);
        CHECK(overall_loss(0.7, 0.4, 0.0).l_overall == 0.7);
        for (double lambda : {0.1, 1.5, 7.0})
            CHECK(overall_loss(0.9, 0.0, lambda).l_overall == 0.9);
        CHECK_THROWS_AS(overall_loss(-0.1, 0.2, 1.0), ContractError);
        CHECK_THROWS_AS(overall_loss(0.1, -0.2, 1.0), ContractError);
        CHECK_THROWS_AS(overall_loss(0.1, 0.2, -1.0), ContractError);
    }

    TEST_CASE("overall loss slope in the domain term equals lambda")
    {
        for (double lambda : {0.5, 1.0, 1.5, 2.0}) {
            const double a = overall_loss(0.5, 0.25, lambda).l_overall;
            const double b = overall_loss(0.5, 0.75, lambda).l_overall;
            CHECK((b - a) / 0.5 == lambda);
        }
    }
}
