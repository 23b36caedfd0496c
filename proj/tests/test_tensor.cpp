#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "trackcast/errors.hpp"
#include "trackcast/param_store.hpp"
#include "trackcast/rng.hpp"
#include "trackcast/tape.hpp"

using namespace trackcast;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t({r, c});
    for (double& v : t.data) v = rng.uniform(-2.0, 2.0);
    return t;
}

double rel_err(double got, double want) {
    return std::fabs(got - want) / std::max(1.0, std::fabs(want));
}

}  // namespace

TEST_CASE("apply computes the documented examples") {
    Tape tape;

    SUBCASE("matmul with identity") {
        const int eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
        const int v = tape.constant(Tensor::matrix(2, 1, {3, 4}));
        const Tensor& out = tape.value(ops::matmul(tape, eye, v));
        CHECK(out.data == std::vector<double>{3, 4});
    }
    SUBCASE("matmul hand oracle") {
        const int a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        const int b = tape.constant(Tensor::matrix(2, 1, {5, 6}));
        const Tensor& out = tape.value(ops::matmul(tape, a, b));
        CHECK(out.data == std::vector<double>{17, 39});
    }
    SUBCASE("relu definition") {
        const int x = tape.constant(Tensor::row({-1, 0, 2}));
        const Tensor& out = tape.value(ops::relu(tape, x));
        CHECK(out.data == std::vector<double>{0, 0, 2});
    }
    SUBCASE("shape mismatch names the op and shapes") {
        const int a = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
        const int b = tape.constant(Tensor::matrix(2, 1, {1, 2}));
        CHECK_THROWS_WITH_AS(ops::matmul(tape, a, b),
                             doctest::Contains("matmul"), ShapeError);
        try {
            ops::matmul(tape, a, b);
        } catch (const ShapeError& e) {
            CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
            CHECK(std::string(e.what()).find("[2x1]") != std::string::npos);
        }
    }
    SUBCASE("log rejects non-positive input") {
        const int x = tape.constant(Tensor::row({1.0, 0.0}));
        CHECK_THROWS_AS(ops::log(tape, x), DomainError);
    }
    SUBCASE("non-finite inputs are rejected at construction") {
        CHECK_THROWS_AS(tape.constant(Tensor::row({1.0, INFINITY})), DomainError);
        CHECK_THROWS_AS(tape.leaf("w", Tensor::row({NAN})), DomainError);
    }
}

TEST_CASE("backward matches closed forms") {
    SUBCASE("d sum(w*w)/dw = 2w") {
        Tape tape;
        const int w = tape.leaf("w", Tensor::row({1, 2}));
        const int loss = ops::reduce_sum(tape, ops::mul(tape, w, w));
        const GradientMap g = tape.backward(loss);
        CHECK(g.at("w").data == std::vector<double>{2, 4});
    }
    SUBCASE("constant loss gives zero gradients") {
        Tape tape;
        tape.leaf("w", Tensor::row({1, 2, 3}));
        const int loss = tape.constant(Tensor::scalar(7.0));
        const GradientMap g = tape.backward(loss);
        CHECK(g.at("w").data == std::vector<double>{0, 0, 0});
    }
    SUBCASE("relu subgradient, grad(relu)(0) = 0") {
        Tape tape;
        const int w = tape.leaf("w", Tensor::row({-1, 3}));
        const int loss = ops::reduce_sum(tape, ops::relu(tape, w));
        const GradientMap g = tape.backward(loss);
        CHECK(g.at("w").data == std::vector<double>{0, 1});

        Tape tape0;
        const int w0 = tape0.leaf("w", Tensor::row({0.0}));
        const GradientMap g0 = tape0.backward(ops::reduce_sum(tape0, ops::relu(tape0, w0)));
        CHECK(g0.at("w").data[0] == 0.0);
    }
    SUBCASE("non-scalar loss is rejected") {
        Tape tape;
        const int w = tape.leaf("w", Tensor::row({1, 2}));
        CHECK_THROWS_AS(tape.backward(w), ShapeError);
    }
}

TEST_CASE("finite differences validate every op kind") {
    // Random small shapes composed through each primitive; relative error
    // must stay under 1e-5 away from non-differentiable points.
    Rng rng(2024);
    const std::vector<OpKind> unary = {OpKind::relu,    OpKind::tanh_fn, OpKind::sigmoid_fn,
                                       OpKind::exp_fn,  OpKind::square,  OpKind::log_fn,
                                       OpKind::sqrt_fn};
    for (OpKind kind : unary) {
        CAPTURE(op_name(kind));
        for (int rep = 0; rep < 4; ++rep) {
            const std::size_t r = static_cast<std::size_t>(rng.uniform_int(1, 4));
            const std::size_t c = static_cast<std::size_t>(rng.uniform_int(1, 4));
            ParamStore params(7);
            Tensor init = random_tensor(rng, r, c);
            if (kind == OpKind::log_fn || kind == OpKind::sqrt_fn)
                for (double& v : init.data) v = 0.5 + std::fabs(v);  // keep clear of the boundary
            if (kind == OpKind::relu)
                for (double& v : init.data)
                    if (std::fabs(v) < 0.05) v = 0.2;  // keep clear of the kink
            params.create("w", {r, c});
            params.get("w") = init;

            auto f = [&](ParamStore& p) {
                Tape tape;
                const int w = tape.leaf("w", p.get("w"));
                return tape.value(ops::reduce_sum(tape, tape.apply(kind, {w}))).item();
            };
            Tape tape;
            const int w = tape.leaf("w", params.get("w"));
            const GradientMap analytic = tape.backward(ops::reduce_sum(tape, tape.apply(kind, {w})));
            const GradientMap numeric = finite_diff_gradient(f, params);
            for (std::size_t i = 0; i < analytic.at("w").numel(); ++i)
                CHECK(rel_err(analytic.at("w").data[i], numeric.at("w").data[i]) < 1e-5);
        }
    }

    // binary ops, matmul, concat, scalar_mul, reductions in one composition
    for (int rep = 0; rep < 6; ++rep) {
        const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 4));
        const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 4));
        ParamStore params(11);
        params.create("a", {n, m});
        params.create("b", {n, m});
        params.create("w", {m, n});
        params.create("s", {1, 1});
        params.get("a") = random_tensor(rng, n, m);
        params.get("b") = random_tensor(rng, n, m);
        params.get("w") = random_tensor(rng, m, n);
        params.get("s") = Tensor::scalar(rng.uniform(0.5, 1.5));

        auto build = [&](Tape& tape, ParamStore& p) {
            const int a = tape.leaf("a", p.get("a"));
            const int b = tape.leaf("b", p.get("b"));
            const int w = tape.leaf("w", p.get("w"));
            const int s = tape.leaf("s", p.get("s"));
            const int sum = ops::add(tape, a, b);
            const int dif = ops::sub(tape, a, b);
            const int prod = ops::mul(tape, sum, dif);
            const int mm = ops::matmul(tape, prod, w);
            const int cat = ops::concat(tape, {ops::scalar_mul(tape, mm, s), mm});
            return ops::add(tape, ops::reduce_mean(tape, cat),
                            ops::reduce_sum(tape, ops::tanh(tape, mm)));
        };
        auto f = [&](ParamStore& p) {
            Tape tape;
            return tape.value(build(tape, p)).item();
        };
        Tape tape;
        const GradientMap analytic = tape.backward(build(tape, params));
        const GradientMap numeric = finite_diff_gradient(f, params);
        for (const std::string& name : params.names())
            for (std::size_t i = 0; i < analytic.at(name).numel(); ++i)
                CHECK(rel_err(analytic.at(name).data[i], numeric.at(name).data[i]) < 1e-5);
    }
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(5);
    ParamStore params(3);
    params.create("w", {2, 2});
    params.get("w") = random_tensor(rng, 2, 2);
    const double a = 1.7, b = -0.6;

    Tape t1;
    int w = t1.leaf("w", params.get("w"));
    const int f = ops::reduce_sum(t1, ops::square(t1, w));
    const int g = ops::reduce_sum(t1, ops::tanh(t1, w));
    const int combo = ops::add(t1, ops::scale(t1, f, a), ops::scale(t1, g, b));
    const GradientMap grad_combo = t1.backward(combo);
    const GradientMap grad_f = t1.backward(f);
    const GradientMap grad_g = t1.backward(g);
    for (std::size_t i = 0; i < 4; ++i) {
        const double expect = a * grad_f.at("w").data[i] + b * grad_g.at("w").data[i];
        CHECK(std::fabs(grad_combo.at("w").data[i] - expect) < 1e-12);
    }
}

TEST_CASE("finite_diff_gradient oracle behaves") {
    ParamStore params(1);
    params.create("w", {1, 1});

    SUBCASE("f = w^2 at w=3") {
        params.get("w") = Tensor::scalar(3.0);
        auto f = [](ParamStore& p) { return p.get("w").item() * p.get("w").item(); };
        const GradientMap g = finite_diff_gradient(f, params);
        CHECK(std::fabs(g.at("w").data[0] - 6.0) < 1e-6);
    }
    SUBCASE("constant f") {
        auto f = [](ParamStore&) { return 4.2; };
        const GradientMap g = finite_diff_gradient(f, params);
        CHECK(g.at("w").data[0] == 0.0);
    }
    SUBCASE("tanh'(0) = 1") {
        params.get("w") = Tensor::scalar(0.0);
        auto f = [](ParamStore& p) { return std::tanh(p.get("w").item()); };
        const GradientMap g = finite_diff_gradient(f, params);
        CHECK(std::fabs(g.at("w").data[0] - 1.0) < 1e-6);
    }
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradients leave parameters unchanged") {
        ParamStore params(1);
        params.create("w", {1, 2});
        params.get("w") = Tensor::row({1.0, -1.0});
        GradientMap grads;
        grads["w"] = Tensor::row({0.0, 0.0});
        adam_step(params, grads, 0.1);
        CHECK(params.get("w").data == std::vector<double>{1.0, -1.0});
    }
    SUBCASE("first step with unit gradient moves by about -lr") {
        ParamStore params(1);
        params.create("w", {1, 1});
        GradientMap grads;
        grads["w"] = Tensor::scalar(1.0);
        adam_step(params, grads, 0.1);
        CHECK(std::fabs(params.get("w").data[0] - (-0.1 / (1.0 + 1e-8))) < 1e-12);
    }
    SUBCASE("parameter with no gradient entry stays put") {
        ParamStore params(1);
        params.create("w", {1, 1});
        params.create("unused", {1, 1});
        params.get("unused") = Tensor::scalar(5.0);
        GradientMap grads;
        grads["w"] = Tensor::scalar(1.0);
        adam_step(params, grads, 0.1);
        CHECK(params.get("unused").data[0] == 5.0);
        CHECK(params.get("w").data[0] != 0.0);
    }
    SUBCASE("subset update leaves other parameters and their state alone") {
        ParamStore params(1);
        params.create("samp.w", {1, 1});
        params.create("gnn.w", {1, 1});
        GradientMap grads;
        grads["samp.w"] = Tensor::scalar(1.0);
        grads["gnn.w"] = Tensor::scalar(1.0);
        adam_step_subset(params, grads, 0.1, "samp.");
        CHECK(params.get("gnn.w").data[0] == 0.0);
        CHECK(params.get("samp.w").data[0] != 0.0);
    }
}

TEST_CASE("determinism: same seed and inputs give bit-identical results") {
    auto run = [] {
        Rng rng(99);
        ParamStore params(42);
        params.create("w", {3, 3}, Init::uniform_xavier);
        Tape tape;
        const int w = tape.leaf("w", params.get("w"));
        const int x = tape.constant(Tensor::matrix(3, 3, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8,
                                                          0.9}));
        const int loss = ops::reduce_sum(tape, ops::sigmoid(tape, ops::matmul(tape, w, x)));
        GradientMap g = tape.backward(loss);
        adam_step(params, g, 0.05);
        return params.get("w").data;
    };
    CHECK(run() == run());
}

TEST_CASE("param store checkpoint round trip is value-exact") {
    namespace fs = std::filesystem;
    Rng rng(17);
    ParamStore params(123456789ULL);
    params.create("alpha", {2, 3}, Init::uniform_xavier);
    params.create("beta", {1, 4}, Init::uniform_xavier);
    GradientMap grads;
    grads["alpha"] = random_tensor(rng, 2, 3);
    adam_step(params, grads, 1e-3);

    const std::string path = (fs::temp_directory_path() / "trackcast_ckpt_test.txt").string();
    params.save(path);
    const ParamStore loaded = ParamStore::load(path);
    CHECK(loaded.seed() == params.seed());
    CHECK(loaded.step() == params.step());
    for (const std::string& name : params.names()) {
        REQUIRE(loaded.has(name));
        CHECK(loaded.get(name).shape == params.get(name).shape);
        CHECK(loaded.get(name).data == params.get(name).data);
    }
    fs::remove(path);
}

TEST_CASE("param names must be unique and shapes immutable") {
    ParamStore params(1);
    params.create("w", {2, 2});
    CHECK_THROWS_AS(params.create("w", {2, 2}), Error);
    CHECK_THROWS_AS(params.get("nope"), Error);
}

TEST_CASE("dpp expected cardinality node with analytic adjoint") {
    SUBCASE("identity kernel gives K/2") {
        Tape tape;
        const int l = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
        CHECK(tape.value(ops::dpp_expected_cardinality(tape, l)).item() ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(31);
        ParamStore params(9);
        params.create("l", {3, 3});
        // symmetric PSD-ish input: A^T A / 3 + small ridge
        Tensor base = random_tensor(rng, 3, 3);
        Tensor sym({3, 3});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                double acc = 0;
                for (std::size_t k = 0; k < 3; ++k) acc += base.at(k, i) * base.at(k, j);
                sym.at(i, j) = acc / 3.0 + (i == j ? 0.1 : 0.0);
            }
        params.get("l") = sym;
        auto f = [](ParamStore& p) {
            Tape tape;
            const int l = tape.leaf("l", p.get("l"));
            return tape.value(ops::dpp_expected_cardinality(tape, l)).item();
        };
        Tape tape;
        const int l = tape.leaf("l", params.get("l"));
        const GradientMap analytic = tape.backward(ops::dpp_expected_cardinality(tape, l));
        const GradientMap numeric = finite_diff_gradient(f, params);
        for (std::size_t i = 0; i < 9; ++i)
            CHECK(rel_err(analytic.at("l").data[i], numeric.at("l").data[i]) < 1e-5);
    }
}
