#include <doctest.h>

#include <oracles.hpp>

#include <stda/checkpoint.hpp>
#include <stda/errors.hpp>
#include <stda/optim.hpp>
#include <stda/param_set.hpp>
#include <stda/tape.hpp>

#include <array>
#include <cstring>
#include <fstream>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>

using namespace stda;
using namespace stda::testing;

namespace {

DenseArray away_from(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo, double hi,
                     std::initializer_list<double> kinks)
{
    std::uniform_real_distribution<double> u(lo, hi);
    DenseArray a = DenseArray::matrix(rows, cols);
    for (auto& v : a.data()) {
        bool near = true;
        while (near) {
            v = u(rng);
            near = false;
            for (double k : kinks)
                near = near || std::abs(v - k) < 1e-3;
        }
    }
    return a;
}

// sum(out .* C) with C drawn from a fixed stream, so the objective is a
// generic linear functional of the primitive's output.
Var contract(Tape& tape, Var out)
{
    std::mt19937_64 rng(77);
    Var c = tape.constant(random_matrix(out.rows(), out.cols(), rng));
    return tape.sum(tape.mul(out, c));
}

struct Primitive {
    const char* name;
    std::function<ParamSet(std::mt19937_64&)> inputs;
    std::function<Var(Tape&, const ParamVars&)> apply;
};

std::size_t dim(std::mt19937_64& rng, std::size_t hi = 4) { return std::uniform_int_distribution<std::size_t>(1, hi)(rng); }

ParamSet one(DenseArray a)
{
    ParamSet p;
    p.add("a", std::move(a));
    return p;
}

ParamSet two(DenseArray a, DenseArray b)
{
    ParamSet p;
    p.add("a", std::move(a));
    p.add("b", std::move(b));
    return p;
}

// Index lists derived from shapes only, so they stay fixed across the
// perturbed evaluations of one instance.
std::vector<std::size_t> fixed_index(std::size_t count, std::size_t range, std::uint64_t salt)
{
    std::mt19937_64 rng(salt + count * 31 + range);
    std::uniform_int_distribution<std::size_t> pick(0, range - 1);
    std::vector<std::size_t> idx(count);
    for (auto& i : idx)
        i = pick(rng);
    return idx;
}

std::vector<Primitive> primitives()
{
    auto unary = [](const char* name, double lo, double hi, std::initializer_list<double> kinks,
                    std::function<Var(Tape&, Var)> op) {
        std::vector<double> k(kinks);
        return Primitive{name,
                         [=](std::mt19937_64& rng) {
                             DenseArray a = DenseArray::matrix(dim(rng), dim(rng));
                             std::uniform_real_distribution<double> u(lo, hi);
                             for (auto& v : a.data()) {
                                 bool near = true;
                                 while (near) {
                                     v = u(rng);
                                     near = false;
                                     for (double x : k)
                                         near = near || std::abs(v - x) < 1e-3;
                                 }
                             }
                             return one(std::move(a));
                         },
                         [=](Tape& t, const ParamVars& p) { return contract(t, op(t, p["a"])); }};
    };
    // Binary ops over each broadcast form of b.
    auto binary = [](const char* name, std::function<Var(Tape&, Var, Var)> op) {
        return Primitive{name,
                         [](std::mt19937_64& rng) {
                             const auto r = dim(rng), c = dim(rng);
                             const auto form = std::uniform_int_distribution<int>(0, 3)(rng);
                             const std::size_t br = form == 0 || form == 2 ? r : 1;
                             const std::size_t bc = form == 0 || form == 1 ? c : 1;
                             return two(random_matrix(r, c, rng), random_matrix(br, bc, rng));
                         },
                         [=](Tape& t, const ParamVars& p) { return contract(t, op(t, p["a"], p["b"])); }};
    };

    std::vector<Primitive> out;
    out.push_back({"matmul",
                   [](std::mt19937_64& rng) {
                       const auto r = dim(rng), k = dim(rng), c = dim(rng);
                       return two(random_matrix(r, k, rng), random_matrix(k, c, rng));
                   },
                   [](Tape& t, const ParamVars& p) { return contract(t, t.matmul(p["a"], p["b"])); }});
    out.push_back(binary("add", [](Tape& t, Var a, Var b) { return t.add(a, b); }));
    out.push_back(binary("sub", [](Tape& t, Var a, Var b) { return t.sub(a, b); }));
    out.push_back(binary("mul", [](Tape& t, Var a, Var b) { return t.mul(a, b); }));
    out.push_back(unary("scale", -2, 2, {}, [](Tape& t, Var a) { return t.scale(a, -1.7); }));
    out.push_back(unary("add_scalar", -2, 2, {}, [](Tape& t, Var a) { return t.add_scalar(a, 0.3); }));
    out.push_back(unary("sigmoid", -3, 3, {}, [](Tape& t, Var a) { return t.sigmoid(a); }));
    out.push_back(unary("tanh", -3, 3, {}, [](Tape& t, Var a) { return t.tanh(a); }));
    out.push_back(unary("leaky_relu", -2, 2, {0.0}, [](Tape& t, Var a) { return t.leaky_relu(a, 0.2); }));
    out.push_back(unary("elu", -2, 2, {0.0}, [](Tape& t, Var a) { return t.elu(a); }));
    out.push_back(unary("log", 0.5, 3, {}, [](Tape& t, Var a) { return t.log(a); }));
    out.push_back(unary("square", -2, 2, {}, [](Tape& t, Var a) { return t.square(a); }));
    out.push_back(unary("sqrt", 0.5, 3, {}, [](Tape& t, Var a) { return t.sqrt(a); }));
    out.push_back(unary("clamp", -1, 1, {-0.5, 0.5}, [](Tape& t, Var a) { return t.clamp(a, -0.5, 0.5); }));
    out.push_back(unary("sum", -2, 2, {}, [](Tape& t, Var a) { return t.scale(t.sum(t.square(a)), 0.5); }));
    out.push_back(unary("mean", -2, 2, {}, [](Tape& t, Var a) { return t.mean(t.square(a)); }));
    out.push_back(unary("softmax_rows", -2, 2, {}, [](Tape& t, Var a) { return t.softmax_rows(a); }));
    out.push_back({"segment_softmax",
                   [](std::mt19937_64& rng) { return one(random_matrix(dim(rng, 8), 1, rng, -2, 2)); },
                   [](Tape& t, const ParamVars& p) {
                       Var a = p["a"];
                       const auto seg = fixed_index(a.rows(), 3, 1);
                       return contract(t, t.segment_softmax(a, seg, 3));
                   }});
    out.push_back({"concat_rows",
                   [](std::mt19937_64& rng) {
                       const auto c = dim(rng);
                       return two(random_matrix(dim(rng), c, rng), random_matrix(dim(rng), c, rng));
                   },
                   [](Tape& t, const ParamVars& p) {
                       const std::array<Var, 3> parts{p["a"], p["b"], p["a"]};
                       return contract(t, t.concat_rows(parts));
                   }});
    out.push_back({"concat_cols",
                   [](std::mt19937_64& rng) {
                       const auto r = dim(rng);
                       return two(random_matrix(r, dim(rng), rng), random_matrix(r, dim(rng), rng));
                   },
                   [](Tape& t, const ParamVars& p) {
                       const std::array<Var, 3> parts{p["b"], p["a"], p["b"]};
                       return contract(t, t.concat_cols(parts));
                   }});
    out.push_back({"slice_rows", [](std::mt19937_64& rng) { return one(random_matrix(dim(rng) + 2, dim(rng), rng)); },
                   [](Tape& t, const ParamVars& p) { return contract(t, t.slice_rows(p["a"], 1, p["a"].rows() - 2)); }});
    out.push_back({"slice_cols", [](std::mt19937_64& rng) { return one(random_matrix(dim(rng), dim(rng) + 2, rng)); },
                   [](Tape& t, const ParamVars& p) { return contract(t, t.slice_cols(p["a"], 1, p["a"].cols() - 2)); }});
    out.push_back({"gather_rows", [](std::mt19937_64& rng) { return one(random_matrix(dim(rng), dim(rng), rng)); },
                   [](Tape& t, const ParamVars& p) {
                       const auto idx = fixed_index(6, p["a"].rows(), 2);
                       return contract(t, t.gather_rows(p["a"], idx));
                   }});
    out.push_back({"scatter_add_rows", [](std::mt19937_64& rng) { return one(random_matrix(dim(rng, 6), dim(rng), rng)); },
                   [](Tape& t, const ParamVars& p) {
                       const auto idx = fixed_index(p["a"].rows(), 3, 3);
                       return contract(t, t.scatter_add_rows(p["a"], idx, 3));
                   }});
    out.push_back({"edge_aggregate",
                   [](std::mt19937_64& rng) {
                       const auto e = dim(rng, 8);
                       return two(random_matrix(dim(rng), dim(rng), rng), random_matrix(e, 1, rng));
                   },
                   [](Tape& t, const ParamVars& p) {
                       const auto e = p["b"].rows();
                       const auto src = fixed_index(e, p["a"].rows(), 4);
                       const auto dst = fixed_index(e, 3, 5);
                       return contract(t, t.edge_aggregate(p["a"], p["b"], src, dst, 3));
                   }});
    return out;
}

} // namespace

TEST_SUITE("diffcore")
{
    TEST_CASE("square objective value and gradient")
    {
        ParamSet p;
        p.add("theta", DenseArray::row({3.0}));
        p.zero_grad();
        const double v = forward_and_grad(p, [](Tape& t, const ParamVars& v) { return t.sum(t.mul(v["theta"], v["theta"])); });
        CHECK(v == 9.0);
        CHECK(p.grad("theta")[0] == 6.0);
    }

    TEST_CASE("sum objective value and gradient")
    {
        ParamSet p;
        p.add("theta", DenseArray::row({1.0, 2.0, 3.0}));
        p.zero_grad();
        const double v = forward_and_grad(p, [](Tape& t, const ParamVars& v) { return t.sum(v["theta"]); });
        CHECK(v == 6.0);
        CHECK(p.grad("theta").values() == std::vector<double>{1.0, 1.0, 1.0});
    }

    TEST_CASE("every primitive matches central differences on 100 seeds")
    {
        for (const auto& prim : primitives()) {
            double worst = 0.0;
            for (std::uint64_t seed = 0; seed < 100; ++seed) {
                std::mt19937_64 rng(seed * 1009 + 17);
                const auto params = prim.inputs(rng);
                worst = std::max(worst, finite_difference_check(params, prim.apply).worst_rel);
            }
            INFO("primitive ", prim.name, " worst relative error ", worst);
            CHECK(worst < 1e-4);
        }
    }

    TEST_CASE("composite of all primitive families matches central differences")
    {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(seed);
            ParamSet p;
            p.add("x", random_matrix(3, 1, rng));
            p.add("w", random_matrix(1, 3, rng));
            p.add("s", away_from(1, 1, rng, 0.5, 1.5, {}));
            const std::vector<std::size_t> seg{0, 0, 1, 1, 1, 2, 2, 2, 2};
            const std::vector<std::size_t> src{0, 1, 2, 0, 1, 2, 0, 1, 2}, dst{0, 0, 1, 1, 1, 2, 2, 2, 0};
            auto f = [&](Tape& t, const ParamVars& v) {
                Var h = t.tanh(t.matmul(v["x"], v["w"]));                       // 3x3
                Var g = t.sigmoid(t.mul(h, v["s"])) - t.elu(t.scale(h, 0.7));   // broadcast scalar
                Var flat = t.concat_rows(std::array<Var, 3>{t.slice_cols(g, 0, 1), t.slice_cols(g, 1, 1),
                                                            t.slice_cols(g, 2, 1)});
                Var alpha = t.segment_softmax(t.leaky_relu(flat, 0.2), seg, 3);
                Var agg = t.edge_aggregate(t.softmax_rows(h), alpha, src, dst, 3);
                Var pos = t.add_scalar(t.square(agg), 0.5);
                return t.mean(t.log(t.sqrt(t.clamp(pos, 0.0, 10.0)))) + t.sum(t.gather_rows(agg, src));
            };
            CHECK(finite_difference_check(p, f).worst_rel < 1e-4);
        }
    }

    TEST_CASE("gradients accumulate across calls")
    {
        std::mt19937_64 rng(5);
        ParamSet p;
        p.add("a", random_matrix(2, 3, rng));
        const Objective f = [](Tape& t, const ParamVars& v) { return t.sum(t.tanh(t.square(v["a"]))); };
        p.zero_grad();
        forward_and_grad(p, f);
        const auto once = p.flat_grads();
        forward_and_grad(p, f);
        const auto twice = p.flat_grads();
        for (std::size_t i = 0; i < once.size(); ++i)
            CHECK(twice[i] == once[i] + once[i]);
    }

    TEST_CASE("fixed inputs give bit-identical values and gradients")
    {
        auto run = [] {
            std::mt19937_64 rng(9);
            ParamSet p;
            p.add("a", random_matrix(4, 4, rng));
            p.zero_grad();
            const double v = forward_and_grad(p, [](Tape& t, const ParamVars& x) {
                return t.mean(t.softmax_rows(t.matmul(x["a"], x["a"])));
            });
            auto g = p.flat_grads();
            g.push_back(v);
            return g;
        };
        CHECK(run() == run());
    }

    TEST_CASE("non-finite results are reported by the primitive")
    {
        Tape t;
        Var a = t.constant(DenseArray::row({-1.0}));
        CHECK_THROWS_AS(t.log(a), NumericError);
        CHECK_THROWS_AS(t.sqrt(a), NumericError);
    }

    TEST_CASE("broadcast shape mismatch is a contract error")
    {
        Tape t;
        Var a = t.constant(DenseArray::matrix(2, 3));
        Var b = t.constant(DenseArray::matrix(2, 2));
        CHECK_THROWS_AS(t.add(a, b), ContractError);
        CHECK_THROWS_AS(t.matmul(a, a), ContractError);
    }

    TEST_CASE("sgd step")
    {
        ParamSet p;
        p.add("p", DenseArray::row({1.0}));
        p.zero_grad();
        p.grad("p")[0] = 2.0;
        sgd_step(p, 0.01);
        CHECK(p.value("p")[0] == doctest::Approx(0.98).epsilon(1e-15));

        auto before = p.flat_values();
        sgd_step(p, 0.0);
        CHECK(p.flat_values() == before);
    }

    TEST_CASE("two sgd steps equal one step of the summed displacement")
    {
        std::mt19937_64 rng(3);
        ParamSet a;
        a.add("w", random_matrix(3, 2, rng));
        a.zero_grad();
        a.grad("w") = random_matrix(3, 2, rng);
        ParamSet b = clone_params(a);
        sgd_step(a, 0.1);
        sgd_step(a, 0.1);
        sgd_step(b, 0.2);
        CHECK(max_abs_diff(a.flat_values(), b.flat_values()) < 1e-15);
    }

    TEST_CASE("adam first step moves by the step size")
    {
        for (double g : {1e-4, 1.0, 250.0}) {
            ParamSet p;
            p.add("p", DenseArray::row({0.0}));
            p.zero_grad();
            p.grad("p")[0] = g;
            auto state = make_adam(0.001);
            adam_step(p, state);
            CHECK(std::abs(p.value("p")[0]) == doctest::Approx(0.001).epsilon(1e-4));
            CHECK(state.step == 1);
        }
    }

    TEST_CASE("adam with zero gradient stays at a fixed point")
    {
        ParamSet p;
        p.add("p", DenseArray::row({0.5, -2.0}));
        p.zero_grad();
        auto state = make_adam(0.01);
        for (int i = 0; i < 50; ++i)
            adam_step(p, state);
        CHECK(p.value("p").values() == std::vector<double>{0.5, -2.0});
        CHECK(state.step == 50);
    }

    TEST_CASE("adam matches a hand-rolled reference for 5 steps")
    {
        std::mt19937_64 rng(21);
        ParamSet p;
        p.add("w", random_matrix(1, 3, rng));
        auto state = make_adam(0.05);
        std::vector<double> ref = p.flat_values(), m(3, 0.0), v(3, 0.0);
        for (int step = 1; step <= 5; ++step) {
            const auto g = random_matrix(1, 3, rng);
            p.zero_grad();
            p.grad("w") = g;
            adam_step(p, state);
            for (std::size_t i = 0; i < 3; ++i) {
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                const double mh = m[i] / (1.0 - std::pow(0.9, step));
                const double vh = v[i] / (1.0 - std::pow(0.999, step));
                ref[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
            }
        }
        CHECK(max_abs_diff(p.flat_values(), ref) < 1e-12);
        CHECK(state.first_moment.same_layout(p));
        CHECK(state.second_moment.same_layout(p));
    }

    TEST_CASE("clones are independent")
    {
        std::mt19937_64 rng(1);
        ParamSet p;
        p.add("a", random_matrix(2, 2, rng));
        p.add("b", random_matrix(1, 3, rng));
        p.zero_grad();
        p.grad("a").fill(1.0);
        const auto original = p.flat_values();

        ParamSet c = clone_params(p);
        c.zero_grad();
        c.grad("a").fill(3.0);
        sgd_step(c, 0.1);
        CHECK(p.flat_values() == original);

        CHECK(clone_params(ParamSet{}).empty());

        std::vector<ParamSet> copies;
        for (int i = 0; i < 1000; ++i)
            copies.push_back(clone_params(p));
        for (int i = 0; i < 1000; ++i)
            copies[i].value("b")[0] = i;
        for (int i = 0; i < 1000; ++i)
            CHECK(copies[i].value("b")[0] == i);
        CHECK(p.flat_values() == original);
    }

    TEST_CASE("param set names are unique and ordered")
    {
        ParamSet p;
        p.add("z", DenseArray::scalar(1));
        p.add("a", DenseArray::scalar(2));
        CHECK_THROWS_AS(p.add("z", DenseArray::scalar(3)), ContractError);
        CHECK(p.entries()[0].name == "z");
        CHECK(p.entries()[1].name == "a");
        p.zero_grad();
        CHECK(p.grads_ready());
    }

    TEST_CASE("binary checkpoint round trip is bit exact")
    {
        std::mt19937_64 rng(4);
        ParamSet p;
        p.add("enc.W", random_matrix(3, 4, rng));
        p.add("enc.b", DenseArray(Shape{2, 2, 2}, std::vector<double>{1e-300, -0.0, 1.0 / 3.0, 2, 3, 4, 5, 6}));
        const auto file = std::filesystem::temp_directory_path() / "stda_ckpt_test.bin";
        save_params_binary(p, file);
        const auto q = load_params_binary(file);
        REQUIRE(q.same_layout(p));
        for (std::size_t i = 0; i < p.size(); ++i)
            CHECK(std::memcmp(p.entries()[i].value.data().data(), q.entries()[i].value.data().data(),
                              p.entries()[i].value.size() * sizeof(double))
                  == 0);
        std::filesystem::remove(file);
    }

    TEST_CASE("json checkpoint round trip")
    {
        std::mt19937_64 rng(8);
        ParamSet p;
        p.add("w", random_matrix(5, 3, rng));
        const auto q = params_from_json(params_to_json(p));
        REQUIRE(q.same_layout(p));
        CHECK(max_abs_diff(q.flat_values(), p.flat_values()) <= 1e-15);
    }

    TEST_CASE("corrupt checkpoints are rejected")
    {
        const auto file = std::filesystem::temp_directory_path() / "stda_bad_ckpt.bin";
        {
            std::ofstream out(file, std::ios::binary);
            out << "not a checkpoint";
        }
        CHECK_THROWS_AS(load_params_binary(file), Error);
        CHECK_THROWS_AS(params_from_json("{\"params\": 3}"), Error);
        std::filesystem::remove(file);
    }
}
