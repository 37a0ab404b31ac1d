#include <doctest.h>

#include <cmath>

#include "s2m2/nn_ops.hpp"
#include "s2m2/tensor.hpp"
#include "testutil.hpp"

using namespace s2m2;
using testutil::grad_check;
using testutil::random_tensor;

TEST_CASE("tensor construction validates shape and finiteness") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), shape_error);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({2}, {1.0, INFINITY}), std::invalid_argument);
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 6.0);
}

TEST_CASE("matmul identity and 1x2 cases") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor v({2, 1}, {3, 4});
    Tensor r = matmul(eye, v);
    CHECK(r.value()[0] == 3.0);
    CHECK(r.value()[1] == 4.0);

    Tensor a({1, 2}, {1, 2});
    CHECK(matmul(a, v).item() == 11.0);

    CHECK_THROWS_AS(matmul(a, a), shape_error);
}

TEST_CASE("matmul matches the naive triple-loop oracle") {
    Rng rng(11);
    Tensor a = random_tensor({5, 7}, rng);
    Tensor b = random_tensor({7, 3}, rng);
    Tensor c = matmul(a, b);
    auto oracle = testutil::matmul_naive(a.value(), 5, 7, b.value(), 3);
    CHECK(testutil::max_abs_diff(c.value(), oracle) < 1e-12);
}

TEST_CASE("conv identity and shift kernels") {
    Tensor x({1, 3}, {1, 2, 3});
    Tensor k1({1, 1}, {1.0});
    CHECK(depthwise_causal_conv1d(x, k1).value() == std::vector<double>{1, 2, 3});

    Tensor k2({1, 2}, {1.0, 0.0});  // out[t] = x[t-1]
    auto shifted = depthwise_causal_conv1d(x, k2).value();
    CHECK(shifted == std::vector<double>{0, 1, 2});

    // kernel wider than the signal is pure padding
    Tensor k5({1, 5}, {0, 0, 0, 0, 1});
    CHECK(depthwise_causal_conv1d(x, k5).value() == std::vector<double>{1, 2, 3});
}

TEST_CASE("conv matches the direct-sum oracle") {
    Rng rng(12);
    Tensor x = random_tensor({3, 20}, rng);
    Tensor k = random_tensor({3, 4}, rng);
    auto got = depthwise_causal_conv1d(x, k).value();
    auto oracle = testutil::conv_naive(x.value(), 3, 20, k.value(), 4);
    CHECK(testutil::max_abs_diff(got, oracle) < 1e-12);
}

TEST_CASE("conv causality: later inputs never reach earlier outputs") {
    Rng rng(13);
    Tensor k = random_tensor({2, 4}, rng);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({2, 16}, rng);
        auto base = depthwise_causal_conv1d(x, k).value();
        int c = rng.uniform_int(0, 1), t = rng.uniform_int(1, 15);
        std::vector<double> bumped = x.value();
        bumped[(size_t)c * 16 + t] += 1.0;
        auto out = depthwise_causal_conv1d(Tensor({2, 16}, bumped), k).value();
        for (int cc = 0; cc < 2; ++cc)
            for (int u = 0; u < t; ++u) CHECK(out[(size_t)cc * 16 + u] == base[(size_t)cc * 16 + u]);
    }
}

TEST_CASE("activation analytic values") {
    Tensor z = Tensor::scalar(0.0);
    CHECK(silu(z).item() == 0.0);
    CHECK(sigmoid(z).item() == 0.5);
    CHECK(softplus(z).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // overflow-safe branch
    CHECK(softplus(Tensor::scalar(50.0)).item() == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(std::isfinite(softplus(Tensor::scalar(800.0)).item()));
    // gradient of softplus at 0 is sigmoid(0)
    Tensor x = Tensor::scalar(0.0, true);
    Tensor loss = sum_all(softplus(x));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("layer norm closed forms") {
    Tensor g = Tensor::full({1, 2}, 1.0);
    Tensor b = Tensor::full({1, 2}, 0.0);
    Tensor x({1, 2}, {1.0, 3.0});
    auto out = layer_norm(x, g, b).value();
    CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-4));

    // constant token collapses to zero before the affine part
    Tensor c({1, 2}, {5.0, 5.0});
    auto flat = layer_norm(c, g, b).value();
    CHECK(flat[0] == 0.0);
    CHECK(flat[1] == 0.0);

    // random 192-dim token ends up zero mean unit variance
    Rng rng(14);
    Tensor g192 = Tensor::full({1, 192}, 1.0);
    Tensor b192 = Tensor::full({1, 192}, 0.0);
    Tensor t = random_tensor({4, 192}, rng, 3.0);
    auto y = layer_norm(t, g192, b192).value();
    for (int r = 0; r < 4; ++r) {
        double mu = 0, var = 0;
        for (int i = 0; i < 192; ++i) mu += y[(size_t)r * 192 + i];
        mu /= 192;
        for (int i = 0; i < 192; ++i) {
            double d = y[(size_t)r * 192 + i] - mu;
            var += d * d;
        }
        var /= 192;
        CHECK(std::fabs(mu) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("batch norm modes") {
    Tensor g = Tensor::full({1, 3}, 1.0);
    Tensor b = Tensor::full({1, 3}, 0.0);
    Tensor rm = Tensor::full({1, 3}, 0.0);
    Tensor rv = Tensor::full({1, 3}, 1.0);

    // two identical rows normalize to zeros
    Tensor x2({2, 3}, {1, 2, 3, 1, 2, 3});
    auto z = batch_norm_1d(x2, g, b, rm, rv, true).value();
    for (double v : z) CHECK(v == 0.0);

    // batch of one rejected in training mode
    Tensor x1({1, 3}, {1, 2, 3});
    CHECK_THROWS_AS(batch_norm_1d(x1, g, b, rm, rv, true), std::invalid_argument);

    // eval with running (0, 1) is identity up to the eps correction
    Tensor rm0 = Tensor::full({1, 3}, 0.0);
    Tensor rv1 = Tensor::full({1, 3}, 1.0);
    auto id = batch_norm_1d(x1, g, b, rm0, rv1, false).value();
    for (int i = 0; i < 3; ++i)
        CHECK(id[(size_t)i] == doctest::Approx(x1.value()[(size_t)i]).epsilon(1e-4));

    // training-mode output columns have vanishing mean
    Rng rng(15);
    Tensor big = random_tensor({16, 3}, rng, 2.0, false);
    auto out = batch_norm_1d(big, g, b, rm, rv, true).value();
    for (int f = 0; f < 3; ++f) {
        double mu = 0;
        for (int r = 0; r < 16; ++r) mu += out[(size_t)r * 3 + f];
        CHECK(std::fabs(mu / 16) < 1e-10);
    }
}

TEST_CASE("backward basics") {
    Rng rng(16);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor loss = sum_all(x);
    backward(loss);
    for (double v : x.grad()) CHECK(v == 1.0);

    // non-scalar loss rejected
    CHECK_THROWS_AS(backward(x), shape_error);
}

TEST_CASE("gradients match finite differences on every primitive") {
    Rng rng(17);
    const double tol = 1e-4;

    SUBCASE("matmul") {
        Tensor a = random_tensor({4, 6}, rng);
        Tensor b = random_tensor({6, 5}, rng);
        auto f = [&]() { return sum_all(silu(matmul(a, b))); };
        CHECK(grad_check(f, a, rng) < tol);
        CHECK(grad_check(f, b, rng) < tol);
    }
    SUBCASE("conv") {
        Tensor x = random_tensor({3, 12}, rng);
        Tensor k = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({1, 3}, rng);
        auto f = [&]() { return sum_all(silu(depthwise_causal_conv1d(x, k, b))); };
        CHECK(grad_check(f, x, rng) < tol);
        CHECK(grad_check(f, k, rng) < tol);
        CHECK(grad_check(f, b, rng) < tol);
    }
    SUBCASE("activations") {
        Tensor x = random_tensor({4, 4}, rng);
        auto fs = [&]() { return sum_all(silu(x)); };
        auto fg = [&]() { return sum_all(sigmoid(x)); };
        auto fp = [&]() { return sum_all(softplus(x)); };
        CHECK(grad_check(fs, x, rng) < tol);
        CHECK(grad_check(fg, x, rng) < tol);
        CHECK(grad_check(fp, x, rng) < tol);
    }
    SUBCASE("layer norm") {
        Tensor x = random_tensor({5, 8}, rng);
        Tensor g = random_tensor({1, 8}, rng, 0.5);
        Tensor b = random_tensor({1, 8}, rng, 0.5);
        auto f = [&]() { return sum_all(silu(layer_norm(x, g, b))); };
        CHECK(grad_check(f, x, rng) < tol);
        CHECK(grad_check(f, g, rng) < tol);
        CHECK(grad_check(f, b, rng) < tol);
    }
    SUBCASE("batch norm training mode") {
        Tensor x = random_tensor({6, 5}, rng);
        Tensor g = random_tensor({1, 5}, rng, 0.5);
        Tensor b = random_tensor({1, 5}, rng, 0.5);
        auto f = [&]() {
            Tensor rm = Tensor::full({1, 5}, 0.0);
            Tensor rv = Tensor::full({1, 5}, 1.0);
            return sum_all(silu(batch_norm_1d(x, g, b, rm, rv, true)));
        };
        CHECK(grad_check(f, x, rng) < tol);
        CHECK(grad_check(f, g, rng) < tol);
        CHECK(grad_check(f, b, rng) < tol);
    }
    SUBCASE("shaping ops") {
        Tensor x = random_tensor({6, 4}, rng);
        auto f = [&]() {
            Tensor t = transpose(x);
            Tensor r = reverse_rows(x);
            Tensor s = slice_rows(x, 1, 3);
            Tensor m = mean_rows(mul(x, x));
            return add(add(sum_all(silu(t)), sum_all(silu(r))),
                       add(sum_all(silu(s)), sum_all(silu(m))));
        };
        CHECK(grad_check(f, x, rng) < tol);
    }
    SUBCASE("reductions and glue") {
        Tensor a = random_tensor({3, 3}, rng);
        Tensor row = random_tensor({1, 4}, rng);
        auto f = [&]() {
            Tensor s = stack_scalars_row({mean_all(a), sum_all(a), mean_all(mul(a, a))});
            Tensor scaled = scale_by_element(a, row, 2);
            return add(sum_all(silu(s)), mean_all(silu(scaled)));
        };
        CHECK(grad_check(f, a, rng) < tol);
        CHECK(grad_check(f, row, rng) < tol);
    }
    SUBCASE("cross entropy") {
        Tensor logits = random_tensor({5, 4}, rng);
        std::vector<int> labels = {0, 3, 1, 2, 2};
        auto f = [&]() { return cross_entropy(logits, labels); };
        CHECK(grad_check(f, logits, rng) < tol);
    }
}

TEST_CASE("cross entropy analytic values") {
    // uniform logits over C classes give ln C
    Tensor logits = Tensor::full({2, 4}, 0.7);
    Tensor loss = cross_entropy(logits, {1, 2});
    CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // a huge correct logit drives the loss to zero
    Tensor sharp({1, 3}, {40.0, 0.0, 0.0});
    CHECK(cross_entropy(sharp, {0}).item() < 1e-12);

    CHECK_THROWS_AS(cross_entropy(sharp, {7}), std::invalid_argument);
}

TEST_CASE("ops are deterministic") {
    Rng rng(18);
    Tensor a = random_tensor({7, 9}, rng);
    Tensor b = random_tensor({9, 2}, rng);
    auto r1 = matmul(a, b).value();
    auto r2 = matmul(a, b).value();
    CHECK(r1 == r2);
    auto l1 = layer_norm(a, Tensor::full({1, 9}, 1.0), Tensor::full({1, 9}, 0.0)).value();
    auto l2 = layer_norm(a, Tensor::full({1, 9}, 1.0), Tensor::full({1, 9}, 0.0)).value();
    CHECK(l1 == l2);
}

TEST_CASE("backward visits shared subgraphs once") {
    // loss = sum(x*x) with x fed into two consumers; gradient must be exact
    Rng rng(19);
    Tensor x = random_tensor({3, 3}, rng);
    Tensor sq = mul(x, x);
    Tensor loss = add(sum_all(sq), sum_all(sq));  // 2 * sum(x^2)
    backward(loss);
    for (size_t i = 0; i < x.grad().size(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(4.0 * x.value()[i]).epsilon(1e-12));
}
