#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "jat/graph.hpp"
#include "jat/ops.hpp"
#include "jat/ops_nn.hpp"
#include "test_util.hpp"

using namespace jat;
using testutil::close_rel;
using testutil::max_rel_err;
using testutil::random_tensor;

namespace {

// One audit case: f builds a scalar loss from a single differentiable input.
// backward() must agree with central differences on every coordinate.
struct AuditCase {
    std::string name;
    Shape shape;
    std::function<ops::Var<double>(Graph<double>&, ops::Var<double>)> build;
};

void run_audit(const AuditCase& c, int seeds, double tol = 1e-4) {
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(derive_seed(1234, static_cast<uint64_t>(seed)));
        const auto x0 = random_tensor(c.shape, rng);

        Graph<double> g;
        const auto x = g.input(x0);
        const auto loss = c.build(g, x);
        g.backward(loss);
        const auto analytic = g.grad(x);

        auto f = [&](const Tensor<double>& probe) {
            Graph<double> gg;
            return gg.value(c.build(gg, gg.input(probe)))[0];
        };
        const auto numeric = finite_difference_gradient<double>(f, x0, 1e-6);
        const double err = max_rel_err(analytic, numeric);
        INFO(c.name, " seed ", seed, " max rel err ", err);
        CHECK(err < tol);
    }
}

ops::Var<double> sum_of(Graph<double>& g, ops::Var<double> v) { return ops::sum_all(g, v); }

}  // namespace

TEST_CASE("forward shapes follow dense-algebra rules") {
    Graph<double> g;
    const auto a = g.constant(Tensor<double>({2, 3}));
    const auto b = g.constant(Tensor<double>({3, 4}));
    CHECK(g.value(ops::matmul(g, a, b)).shape == Shape{2, 4});

    const auto img = g.constant(Tensor<double>({1, 4, 84, 84}));
    const auto w = g.constant(Tensor<double>({32, 4, 3, 3}));
    const auto bias = g.constant(Tensor<double>({32}));
    CHECK(g.value(ops::conv2d(g, img, w, bias, 2, 1)).shape == Shape{1, 32, 42, 42});

    const auto x = g.constant(Tensor<double>({1, 3}));
    const auto sm = ops::softmax_lastdim(g, x);
    for (int j = 0; j < 3; ++j) CHECK(g.value(sm)[j] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("shape mismatches are rejected with both shapes reported") {
    Graph<double> g;
    const auto a = g.constant(Tensor<double>({2, 3}));
    const auto b = g.constant(Tensor<double>({4, 2}));
    CHECK_THROWS_WITH_AS(ops::matmul(g, a, b), doctest::Contains("[2,3]"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(ops::add(g, a, b), doctest::Contains("[4,2]"), std::invalid_argument);
}

TEST_CASE("backward of sum is ones and product rule holds") {
    Graph<double> g;
    Rng rng(7);
    const auto x0 = random_tensor({3, 4}, rng);
    const auto y0 = random_tensor({3, 4}, rng);
    const auto x = g.input(x0);
    const auto y = g.input(y0);

    g.backward(ops::sum_all(g, x));
    for (int64_t i = 0; i < x0.numel(); ++i) CHECK(g.grad(x)[i] == 1.0);

    Graph<double> g2;
    const auto x2 = g2.input(x0);
    const auto y2 = g2.input(y0);
    g2.backward(ops::sum_all(g2, ops::mul(g2, x2, y2)));
    for (int64_t i = 0; i < x0.numel(); ++i) {
        CHECK(g2.grad(x2)[i] == doctest::Approx(y0[i]));
        CHECK(g2.grad(y2)[i] == doctest::Approx(x0[i]));
    }
}

TEST_CASE("backward rejects non-scalar roots") {
    Graph<double> g;
    const auto x = g.input(Tensor<double>({2, 2}));
    CHECK_THROWS_AS(g.backward(ops::add(g, x, x)), std::invalid_argument);
}

TEST_CASE("finite differences recover analytic derivatives") {
    auto square = [](const Tensor<double>& t) { return t[0] * t[0]; };
    const auto grad = finite_difference_gradient<double>(square, Tensor<double>::scalar(3.0), 1e-4);
    CHECK(close_rel(grad[0], 6.0, 1e-6));

    auto constant = [](const Tensor<double>&) { return 42.0; };
    const auto zero = finite_difference_gradient<double>(constant, Tensor<double>({5}), 1e-4);
    for (int i = 0; i < 5; ++i) CHECK(zero[i] == 0.0);
}

TEST_CASE("gradient audit: every forward op matches finite differences") {
    // masks and constants reused by the cases below
    Rng fixture_rng(99);
    const auto mask = [] {
        Tensor<uint8_t> m({4, 5});
        for (int64_t i = 0; i < m.numel(); ++i) m[i] = (i % 3 == 0) ? 1 : 0;
        return m;
    }();
    const auto mm_rhs = random_tensor({5, 3}, fixture_rng);
    const auto mse_target = random_tensor({4, 5}, fixture_rng);

    std::vector<AuditCase> cases = {
        {"add", {4, 5}, [](auto& g, auto x) { return sum_of(g, ops::mul(g, ops::add(g, x, x), x)); }},
        {"add_bias", {3, 4},
         [](auto& g, auto x) {
             auto b = ops::slice(g, x, {0, 0}, {1, 4});
             auto br = ops::reshape(g, b, {4});
             return sum_of(g, ops::mul(g, ops::add_bias(g, x, br), x));
         }},
        {"scale", {4, 5}, [](auto& g, auto x) { return sum_of(g, ops::mul(g, ops::scale(g, x, -1.7), x)); }},
        {"gelu", {4, 5}, [](auto& g, auto x) { return sum_of(g, ops::gelu(g, x)); }},
        {"masked_fill", {4, 5},
         [mask](auto& g, auto x) { return sum_of(g, ops::mul(g, ops::masked_fill(g, x, mask, -3.0), x)); }},
        {"reshape", {4, 5}, [](auto& g, auto x) { return sum_of(g, ops::mul(g, ops::reshape(g, x, {5, 4}), ops::reshape(g, x, {5, 4}))); }},
        {"transpose_last2", {2, 3, 4},
         [](auto& g, auto x) {
             auto t = ops::transpose_last2(g, x);
             return sum_of(g, ops::mul(g, t, t));
         }},
        {"concat", {2, 3},
         [](auto& g, auto x) {
             auto c = ops::concat(g, 0, {x, x, x});
             return sum_of(g, ops::mul(g, c, c));
         }},
        {"pad", {2, 3},
         [](auto& g, auto x) {
             auto p = ops::pad(g, x, {{1, 0}, {2, 1}});
             return sum_of(g, ops::mul(g, p, p));
         }},
        {"slice", {4, 5},
         [](auto& g, auto x) {
             auto s = ops::slice(g, x, {1, 2}, {2, 3});
             return sum_of(g, ops::mul(g, s, s));
         }},
        {"gather_rows", {4, 5},
         [](auto& g, auto x) {
             auto r = ops::gather_rows(g, x, {3, 1, 1, 0});
             return sum_of(g, ops::mul(g, r, r));
         }},
        {"scatter_rows", {3, 4},
         [](auto& g, auto x) {
             auto s = ops::scatter_rows(g, x, {4, 0, 2}, 6);
             return sum_of(g, ops::mul(g, s, s));
         }},
        {"matmul_lhs", {4, 5},
         [mm_rhs](auto& g, auto x) {
             auto y = ops::matmul(g, x, g.constant(mm_rhs));
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"matmul_both", {4, 4},
         [](auto& g, auto x) {
             auto y = ops::matmul(g, x, x);
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"softmax", {4, 5},
         [mse_target](auto& g, auto x) {
             return sum_of(g, ops::mul(g, ops::softmax_lastdim(g, x), g.constant(mse_target)));
         }},
        {"layer_norm", {5},
         [](auto& g, auto x) {
             Rng rr(16);
             auto gamma = g.constant(Tensor<double>::full({5}, 1.3));
             auto beta = g.constant(Tensor<double>::full({5}, 0.2));
             auto y = ops::layer_norm(g, x, gamma, beta);
             return sum_of(g, ops::mul(g, y, g.constant(random_tensor({5}, rr))));
         }},
        {"layer_norm_affine", {12},
         [](auto& g, auto x) {
             Rng rr(18);
             auto data = ops::reshape(g, ops::slice(g, x, {0}, {8}), {2, 4});
             auto gamma = ops::slice(g, x, {8}, {4});
             auto beta = ops::slice(g, x, {4}, {4});
             auto y = ops::layer_norm(g, data, gamma, beta);
             return sum_of(g, ops::mul(g, y, g.constant(random_tensor({2, 4}, rr))));
         }},
        {"instance_norm", {2, 2, 3, 3},
         [](auto& g, auto x) {
             Rng rr(17);
             auto gamma = g.constant(Tensor<double>::full({2}, 0.9));
             auto beta = g.constant(Tensor<double>::full({2}, -0.1));
             auto y = ops::instance_norm(g, x, gamma, beta);
             // project onto a random direction; sum(y*y) is nearly invariant
             // under normalization and would leave nothing to audit
             return sum_of(g, ops::mul(g, y, g.constant(random_tensor({2, 2, 3, 3}, rr))));
         }},
        {"embedding_lookup", {6, 4},
         [](auto& g, auto x) {
             auto r = ops::embedding_lookup(g, x, {0, 5, 2, 2});
             return sum_of(g, ops::mul(g, r, r));
         }},
        {"conv2d", {1, 2, 5, 5},
         [](auto& g, auto x) {
             Rng wr(5);
             auto w = g.input(random_tensor({3, 2, 3, 3}, wr, 0.4));
             auto b = g.constant(Tensor<double>::full({3}, 0.1));
             auto y = ops::conv2d(g, x, w, b, 2, 1);
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"conv2d_weights", {3, 2, 3, 3},
         [](auto& g, auto w) {
             Rng xr(6);
             auto x = g.constant(random_tensor({2, 2, 5, 5}, xr));
             auto b = g.constant(Tensor<double>({3}));
             auto y = ops::conv2d(g, x, w, b, 1, 1);
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"conv2d_transposed", {1, 3, 3, 3},
         [](auto& g, auto x) {
             Rng wr(8);
             auto w = g.input(random_tensor({3, 2, 3, 3}, wr, 0.4));
             auto b = g.constant(Tensor<double>::full({2}, -0.2));
             auto y = ops::conv2d_transposed(g, x, w, b, 2, 1, 1);
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"conv2d_transposed_weights", {2, 3, 2, 2},
         [](auto& g, auto w) {
             Rng xr(9);
             auto x = g.constant(random_tensor({1, 2, 4, 4}, xr));
             auto b = g.constant(Tensor<double>({3}));
             auto y = ops::conv2d_transposed(g, x, w, b, 2, 0, 0);
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"attention_causal_windowed", {1, 6, 6},
         [](auto& g, auto x) {
             auto y = ops::attention_core(g, x, 2, true, 3);
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"attention_full", {2, 4, 6},
         [](auto& g, auto x) {
             auto y = ops::attention_core(g, x, 1, false, 0);
             return sum_of(g, ops::mul(g, y, y));
         }},
        {"cross_entropy", {4, 5},
         [](auto& g, auto x) {
             auto l = ops::cross_entropy_rows(g, x, {1, 0, 4, 2});
             return sum_of(g, ops::mul(g, l, l));
         }},
        {"mse_rows", {4, 5},
         [mse_target](auto& g, auto x) {
             auto l = ops::mse_rows(g, x, mse_target);
             return sum_of(g, ops::mul(g, l, l));
         }},
        {"sum_all", {4, 5}, [](auto& g, auto x) { return sum_of(g, ops::mul(g, x, x)); }},
        {"mean_all", {4, 5}, [](auto& g, auto x) { auto m = ops::mean_all(g, x); return ops::mul(g, m, m); }},
    };

    for (const auto& c : cases) {
        CAPTURE(c.name);
        run_audit(c, 20);
    }
}

TEST_CASE("layernorm-then-sum matches finite differences on a 5-vector") {
    // x packs [data(5) | gamma(5) | beta(5)] so the plain sum has a nonzero
    // gradient through all layer-norm inputs
    AuditCase c{"layernorm_sum", {15}, [](auto& g, auto x) {
                    auto data = ops::slice(g, x, {0}, {5});
                    auto gamma = ops::slice(g, x, {5}, {5});
                    auto beta = ops::slice(g, x, {10}, {5});
                    return sum_of(g, ops::layer_norm(g, data, gamma, beta));
                }};
    run_audit(c, 20, 1e-5);
}

TEST_CASE("forward evaluation is deterministic") {
    Rng rng(11);
    const auto x0 = random_tensor({7, 9}, rng);
    const auto w0 = random_tensor({9, 8}, rng);
    std::vector<double> first;
    for (int run = 0; run < 3; ++run) {
        Graph<double> g;
        auto y = ops::gelu(g, ops::matmul(g, g.constant(x0), g.constant(w0)));
        auto out = g.value(ops::softmax_lastdim(g, y));
        if (run == 0) {
            first = out.data;
        } else {
            CHECK(out.data == first);
        }
    }
}

TEST_CASE("instance norm output has zero mean and unit variance per channel") {
    Rng rng(3);
    Graph<double> g;
    const auto x = g.constant(random_tensor({2, 3, 8, 8}, rng, 2.5));
    const auto gamma = g.constant(Tensor<double>::full({3}, 1.0));
    const auto beta = g.constant(Tensor<double>({3}));
    const auto& y = g.value(ops::instance_norm(g, x, gamma, beta));
    const int64_t hw = 64;
    for (int i = 0; i < 6; ++i) {
        double mu = 0.0, var = 0.0;
        for (int64_t j = 0; j < hw; ++j) mu += y[i * hw + j];
        mu /= static_cast<double>(hw);
        for (int64_t j = 0; j < hw; ++j) var += (y[i * hw + j] - mu) * (y[i * hw + j] - mu);
        var /= static_cast<double>(hw);
        CHECK(std::abs(mu) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-5);
    }
}

TEST_CASE("parameter store accumulates gradients and shares nodes by name") {
    ParamStore<double> params;
    Rng rng(21);
    params.add("w", random_tensor({3, 3}, rng));
    Graph<double> g(&params);
    const auto w1 = g.param("w");
    const auto w2 = g.param("w");
    CHECK(w1 == w2);  // same name, same node: sharing is object identity

    const auto y = ops::matmul(g, w1, w2);
    params.zero_grad();
    g.backward(ops::sum_all(g, y));
    // d/dW sum(W W) = (sum over rows) both as left and right operand
    Graph<double> g2(&params);
    auto f = [&](const Tensor<double>& probe) {
        ParamStore<double> p2;
        p2.add("w", probe);
        Graph<double> gg(&p2);
        auto w = gg.param("w");
        return gg.value(ops::sum_all(gg, ops::matmul(gg, w, w)))[0];
    };
    const auto numeric = finite_difference_gradient<double>(f, params.at("w").value, 1e-6);
    CHECK(max_rel_err(params.at("w").grad, numeric) < 1e-5);
}

TEST_CASE("unreachable parameters keep zero gradient") {
    ParamStore<double> params;
    params.add("used", Tensor<double>::full({2}, 1.0));
    params.add("unused", Tensor<double>::full({2}, 1.0));
    Graph<double> g(&params);
    const auto u = g.param("used");
    params.zero_grad();
    g.backward(ops::sum_all(g, u));
    CHECK(params.at("used").grad[0] == 1.0);
    CHECK(params.at("unused").grad[0] == 0.0);
    CHECK(params.at("unused").grad[1] == 0.0);
}
