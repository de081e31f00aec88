#include <doctest.h>

#include <oracles.hpp>

#include <stda/domain_adversarial.hpp>
#include <stda/errors.hpp>
#include <stda/st_embedding.hpp>
#include <stda/synth.hpp>
#include <stda/normalizer.hpp>
#include <stda/optim.hpp>
#include <stda/windows.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace stda;
using namespace stda::testing;

namespace {

ParamSet zero_disc(std::size_t width)
{
    auto d = init_discriminator(width, 0);
    for (auto& e : d)
        e.value.fill(0.0);
    return d;
}

std::vector<double> row(const DenseArray& a, std::size_t r)
{
    return {a.data().begin() + static_cast<std::ptrdiff_t>(r * a.cols()),
            a.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * a.cols())};
}

// Discriminator whose output is a fixed probability p for every input.
ParamSet constant_disc(std::size_t width, double p)
{
    auto d = zero_disc(width);
    d.value("disc.b2")[0] = std::log(p / (1.0 - p));
    return d;
}

} // namespace

TEST_SUITE("domain_adversarial")
{
    TEST_CASE("zero weights give one half")
    {
        std::mt19937_64 rng(1);
        const auto out = discriminate(random_matrix(6, 4, rng, -50, 50), zero_disc(4));
        for (double v : out.values())
            CHECK(v == 0.5);
    }

    TEST_CASE("outputs lie in the open unit interval")
    {
        std::mt19937_64 rng(2);
        const auto d = init_discriminator(5, 3);
        const auto out = discriminate(random_matrix(50, 5, rng, -5, 5), d);
        for (double v : out.values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }

    TEST_CASE("discriminator matches the layer-composition oracle")
    {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            std::mt19937_64 rng(seed);
            const auto d = init_discriminator(3, seed + 9);
            const auto x = random_matrix(4, 3, rng, -2, 2);
            const auto out = discriminate(x, d);
            for (std::size_t r = 0; r < 4; ++r)
                CHECK(std::abs(out[r] - discriminator_oracle(row(x, r), d)) <= 1e-12);
        }
    }

    TEST_CASE("equilibrium values")
    {
        std::mt19937_64 rng(3);
        const auto d = zero_disc(4);
        const auto s = random_matrix(5, 4, rng), t = random_matrix(3, 4, rng);
        CHECK(discriminator_loss(s, t, d) == 2.0 * std::numbers::ln2);
        CHECK(st_domain_loss(t, d) == std::numbers::ln2);
        CHECK(encoder_adversarial_loss(t, d) == -std::numbers::ln2);
    }

    TEST_CASE("limit cases stay finite")
    {
        std::mt19937_64 rng(4);
        const auto s = random_matrix(3, 2, rng), t = random_matrix(3, 2, rng);
        // Saturated outputs: D = 1 and D = 0 before clamping.
        for (double b : {800.0, -800.0}) {
            auto d = zero_disc(2);
            d.value("disc.b2")[0] = b;
            CHECK(std::isfinite(discriminator_loss(s, t, d)));
            CHECK(std::isfinite(st_domain_loss(t, d)));
            CHECK(std::isfinite(encoder_adversarial_loss(t, d)));
        }
        CHECK(st_domain_loss(t, constant_disc(2, 1.0 - 1e-12)) < 1e-6);
        CHECK(std::abs(encoder_adversarial_loss(t, constant_disc(2, 1e-12))) < 1e-6);

        // Perfect separation: source features positive, target negative.
        auto d = zero_disc(1);
        d.value("disc.W1")[0] = 1.0;
        d.value("disc.W2")[0] = 60.0;
        const auto src = DenseArray::matrix(2, 1, {1.0, 2.0});
        const auto tgt = DenseArray::matrix(2, 1, {-1.0, -2.0});
        CHECK(discriminator_loss(src, tgt, d) < 1e-5);
    }

    TEST_CASE("losses match per-sample oracles")
    {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            std::mt19937_64 rng(seed);
            const auto d = init_discriminator(3, seed);
            const auto s = random_matrix(4, 3, rng, -2, 2), t = random_matrix(4, 3, rng, -2, 2);
            double real = 0.0, fake = 0.0, bce = 0.0;
            for (std::size_t r = 0; r < 4; ++r) {
                real += std::log(discriminator_oracle(row(s, r), d));
                fake += std::log(1.0 - discriminator_oracle(row(t, r), d));
                bce += -std::log(discriminator_oracle(row(t, r), d));
            }
            CHECK(std::abs(discriminator_loss(s, t, d) - (-(real / 4.0 + fake / 4.0))) <= 1e-12);
            CHECK(std::abs(st_domain_loss(t, d) - bce / 4.0) <= 1e-12);
            CHECK(std::abs(encoder_adversarial_loss(t, d) - fake / 4.0) <= 1e-12);
        }
    }

    TEST_CASE("encoder losses leave discriminator gradients untouched")
    {
        std::mt19937_64 rng(5);
        auto d = init_discriminator(3, 1);
        ParamSet feats;
        feats.add("z", random_matrix(4, 3, rng));
        feats.zero_grad();
        d.zero_grad();
        forward_and_grad(feats, [&](Tape& t, const ParamVars& p) {
            auto dv = t.bind_constant(d);
            return encoder_adversarial_loss(t, p["z"], dv) + st_domain_loss(t, p["z"], dv);
        });
        for (const auto& e : d)
            for (double g : e.grad.values())
                CHECK(g == 0.0);
        bool moved = false;
        for (double g : feats.grad("z").values())
            moved = moved || g != 0.0;
        CHECK(moved);
    }

    TEST_CASE("encoder-side gradient matches a manual chain rule")
    {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(seed);
            const std::size_t w = 3;
            const auto d = init_discriminator(w, seed);
            ParamSet feats;
            feats.add("z", random_matrix(1, w, rng, -2, 2));
            feats.zero_grad();
            forward_and_grad(feats, [&](Tape& t, const ParamVars& p) {
                return encoder_adversarial_loss(t, p["z"], t.bind_constant(d));
            });

            // L = log(1 - s(o)), o = sum_j leaky(x W1 + b1)_j W2_j + b2
            const auto& x = feats.value("z");
            const auto& w1 = d.value("disc.W1");
            std::vector<double> pre(w);
            double o = d.value("disc.b2")[0];
            for (std::size_t j = 0; j < w; ++j) {
                pre[j] = d.value("disc.b1")[j];
                for (std::size_t k = 0; k < w; ++k)
                    pre[j] += x[k] * w1(k, j);
                o += leaky(pre[j], 0.2) * d.value("disc.W2")[j];
            }
            const double dl_do = -sigmoid(o); // d/do log(1 - s(o))
            for (std::size_t k = 0; k < w; ++k) {
                double g = 0.0;
                for (std::size_t j = 0; j < w; ++j)
                    g += dl_do * d.value("disc.W2")[j] * (pre[j] > 0 ? 1.0 : 0.2) * w1(k, j);
                CHECK(std::abs(feats.grad("z")[k] - g) <= 1e-10);
            }
        }
    }

    TEST_CASE("minimax and non-saturating encoder losses push the same way")
    {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::mt19937_64 rng(seed);
            const auto d = init_discriminator(4, seed);
            ParamSet a, b;
            a.add("z", random_matrix(3, 4, rng));
            b = clone_params(a);
            a.zero_grad();
            b.zero_grad();
            forward_and_grad(a, [&](Tape& t, const ParamVars& p) { return encoder_adversarial_loss(t, p["z"], t.bind_constant(d)); });
            forward_and_grad(b, [&](Tape& t, const ParamVars& p) { return st_domain_loss(t, p["z"], t.bind_constant(d)); });
            // Per row both gradients are positive multiples of -dD/dz.
            for (std::size_t r = 0; r < 3; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < 4; ++c)
                    dot += a.grad("z")(r, c) * b.grad("z")(r, c);
                CHECK(dot >= 0.0);
            }
        }
    }

    TEST_CASE("one discriminator step on separable features lowers its loss")
    {
        std::mt19937_64 rng(6);
        auto src = random_matrix(8, 3, rng, 0.5, 1.5);
        auto tgt = random_matrix(8, 3, rng, -1.5, -0.5);
        auto d = init_discriminator(3, 2);
        const double before = discriminator_step(src, tgt, d, 0.1);
        CHECK(discriminator_loss(src, tgt, d) < before);

        auto frozen = init_discriminator(3, 2);
        const auto copy = frozen.flat_values();
        discriminator_step(src, tgt, frozen, 0.0);
        CHECK(frozen.flat_values() == copy);
    }

    TEST_CASE("adversarial round leaves the encoder untouched")
    {
        SynthConfig a, b;
        a.n_nodes = b.n_nodes = 5;
        a.n_days = b.n_days = 1;
        b.seed = 9;
        const auto ca = synth_city(a), cb = synth_city(b);
        const auto wa = make_windows(ca.series, 4, 1, {0, 40}, 10);
        const auto wb = make_windows(cb.series, 4, 1, {0, 40}, 10);
        EncoderConfig cfg;
        cfg.hidden = 4;
        cfg.heads = 1;
        const auto enc = init_encoder(cfg, 1);
        const auto enc_copy = enc.flat_values();
        auto d = init_discriminator(4, 1);
        const auto d_copy = d.flat_values();
        adversarial_round({&wa, &ca.graph}, {&wb, &cb.graph}, enc, cfg, d, 0.05);
        CHECK(enc.flat_values() == enc_copy);
        CHECK(d.flat_values() != d_copy);
    }

    TEST_CASE("encoder updates keep the discriminator nearer chance than discriminator-only training")
    {
        double ld_adv = 0.0, ld_alone = 0.0, lst_adv = 0.0, lst_alone = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            SynthConfig sa, sb;
            sa.n_nodes = sb.n_nodes = 6;
            sa.n_days = sb.n_days = 1;
            sa.seed = 10 + seed;
            sb.seed = 50 + seed;
            sb.base_speed = 40.0;
            auto ca = synth_city(sa), cb = synth_city(sb);
            // A shared normalizer keeps the level shift between the two cities.
            const std::vector<const SpeedSeries*> both{&ca.series, &cb.series};
            const auto norm = pooled_normalizer(both, 6);
            ca.series = norm.apply(ca.series);
            cb.series = norm.apply(cb.series);
            const auto wa = make_windows(ca.series, 4, 1, {0, 200}, 20);
            const auto wb = make_windows(cb.series, 4, 1, {0, 200}, 20);

            EncoderConfig cfg;
            cfg.hidden = 4;
            cfg.heads = 1;
            cfg.mode = SandwichMode::FinalState;
            for (const bool adversarial : {true, false}) {
                auto enc = init_encoder(cfg, seed);
                auto d = init_discriminator(4, seed);
                for (int round = 0; round < 200; ++round) {
                    adversarial_round({&wa, &ca.graph}, {&wb, &cb.graph}, enc, cfg, d, 0.05);
                    if (!adversarial)
                        continue;
                    enc.zero_grad();
                    forward_and_grad(enc, [&](Tape& t, const ParamVars& p) {
                        return st_domain_loss(t, st_embed(t, wb, cb.graph, p, cfg), t.bind_constant(d));
                    });
                    sgd_step(enc, 0.05);
                }
                const auto za = st_embed(wa, ca.graph, enc, cfg).z;
                const auto zb = st_embed(wb, cb.graph, enc, cfg).z;
                (adversarial ? ld_adv : ld_alone) += discriminator_loss(za, zb, d);
                (adversarial ? lst_adv : lst_alone) += st_domain_loss(zb, d);
            }
        }
        CHECK(ld_adv > ld_alone);
        CHECK(lst_adv < lst_alone);
        CHECK(std::abs(ld_adv / 5.0 - 2.0 * std::log(2.0)) < 0.05);
    }
}
