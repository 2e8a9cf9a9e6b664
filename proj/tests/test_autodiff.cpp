#include <cmath>

#include "doctest.h"
#include "stylefuse/autodiff.hpp"
#include "stylefuse/errors.hpp"
#include "test_util.hpp"

using namespace sf;
using sf::testing::naive_conv2d;
using sf::testing::random_tensor;

TEST_CASE("conv2d with a unit 1x1 kernel is the identity") {
    Tape tape;
    Tensor x = random_tensor({1, 3, 3}, 1);
    Var y = conv2d(tape.constant(x), tape.constant(Tensor::full({1, 1, 1, 1}, 1.0)),
                   tape.constant(Tensor::zeros({1})), 0);
    CHECK(y.value() == x);
}

TEST_CASE("conv2d rejects even kernels") {
    Tape tape;
    Var x = tape.constant(Tensor::from({1, 2, 2}, {1, 2, 3, 4}));
    Var k = tape.constant(Tensor::from({1, 1, 2, 2}, {1, 1, 1, 1}));
    CHECK_THROWS_AS(conv2d(x, k, tape.constant(Tensor::zeros({1})), 0), DimensionError);
}

TEST_CASE("conv2d rejects inconsistent channel counts") {
    Tape tape;
    Var x = tape.constant(Tensor::zeros({2, 4, 4}));
    Var k = tape.constant(Tensor::zeros({1, 3, 3, 3}));
    CHECK_THROWS_AS(conv2d(x, k, tape.constant(Tensor::zeros({1})), 1), DimensionError);
}

TEST_CASE("conv2d matches the naive loop") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Tape tape;
        Tensor x = random_tensor({2, 5, 5}, 10 + seed);
        Tensor w = random_tensor({3, 2, 3, 3}, 20 + seed);
        Tensor b = random_tensor({3}, 30 + seed);
        for (long pad : {0L, 1L, 2L}) {
            Var y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), static_cast<std::size_t>(pad));
            CHECK(max_abs_diff(y.value(), naive_conv2d(x, w, b, pad)) <= 1e-12);
        }
    }
    // non-square input, 5x5 kernel
    Tape tape;
    Tensor x = random_tensor({3, 6, 9}, 41);
    Tensor w = random_tensor({2, 3, 5, 5}, 42);
    Tensor b = random_tensor({2}, 43);
    Var y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 2);
    CHECK(max_abs_diff(y.value(), naive_conv2d(x, w, b, 2)) <= 1e-12);
}

TEST_CASE("leaky_relu") {
    Tape tape;
    Var x = tape.parameter(Tensor::from({2}, {1.0, -1.0}));
    Var y = leaky_relu(x, 0.2);
    CHECK(y.value()[0] == 1.0);
    CHECK(y.value()[1] == doctest::Approx(-0.2).epsilon(1e-15));

    Tensor pos = random_tensor({7}, 3, 0.0, 2.0);
    Var yp = leaky_relu(tape.constant(pos), 0.2);
    CHECK(yp.value() == pos);

    Tape t2;
    Var x2 = t2.parameter(Tensor::from({2}, {2.0, -3.0}));
    t2.backward(sum(leaky_relu(x2, 0.2)));
    CHECK(t2.grad(x2)[0] == 1.0);
    CHECK(t2.grad(x2)[1] == 0.2);

    CHECK_THROWS_AS(leaky_relu(x, 1.5), ContractError);
}

TEST_CASE("leaky_relu takes the positive branch at zero") {
    Tape tape;
    Var x = tape.parameter(Tensor::from({1}, {0.0}));
    tape.backward(sum(leaky_relu(x, 0.2)));
    CHECK(tape.grad(x)[0] == 1.0);
}

TEST_CASE("upsample2x") {
    Tape tape;
    Var one = upsample2x(tape.constant(Tensor::full({1, 1, 1}, 1.0)));
    CHECK(one.value() == Tensor::full({1, 2, 2}, 1.0));

    Var c = upsample2x(tape.constant(Tensor::full({2, 3, 4}, 0.7)));
    CHECK(c.value() == Tensor::full({2, 6, 8}, 0.7));

    Tensor x = random_tensor({2, 3, 3}, 5);
    auto r = grad_check([](Var v) { return sum(upsample2x(v)); }, x);
    CHECK(r.analytic == Tensor::full({2, 3, 3}, 4.0));
    for (double n : r.numeric) CHECK(n == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("adain reduces to an affine map on normalised input") {
    // Two channels, each exactly zero-mean with unit population variance.
    Tensor x = Tensor::from({2, 2, 2}, {1, -1, 1, -1, 2, 0, -2, 0});
    for (std::size_t i = 4; i < 8; ++i) x[i] /= std::sqrt(2.0);
    Tape tape;
    Tensor s = Tensor::from({2}, {1.5, -0.5});
    Tensor b = Tensor::from({2}, {0.25, 3.0});
    Var y = adain(tape.constant(x), tape.constant(s), tape.constant(b), 1e-12);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(y.value()[c * 4 + i] == doctest::Approx(s[c] * x[c * 4 + i] + b[c]).epsilon(1e-9));
}

TEST_CASE("adain with zero scale returns the shift and blocks the input gradient") {
    Tape tape;
    Var x = tape.parameter(random_tensor({2, 3, 3}, 8));
    Var y = adain(x, tape.constant(Tensor::zeros({2})), tape.constant(Tensor::from({2}, {0.3, -0.4})), 1e-8);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(y.value()[i] == 0.3);
        CHECK(y.value()[9 + i] == -0.4);
    }
    tape.backward(sum_squares(y));
    CHECK(tape.grad(x) == Tensor::zeros({2, 3, 3}));
}

TEST_CASE("adain output statistics follow scale and shift") {
    Tape tape;
    Tensor x = random_tensor({3, 4, 5}, 12, -3.0, 3.0);
    Tensor s = Tensor::from({3}, {2.0, -0.7, 0.1});
    Tensor b = Tensor::from({3}, {-1.0, 0.5, 4.0});
    Var y = adain(tape.constant(x), tape.constant(s), tape.constant(b), 1e-8);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < 20; ++i) mean += y.value()[c * 20 + i];
        mean /= 20.0;
        for (std::size_t i = 0; i < 20; ++i) var += std::pow(y.value()[c * 20 + i] - mean, 2);
        CHECK(std::abs(mean - b[c]) < 1e-6);
        CHECK(std::abs(std::sqrt(var / 20.0) - std::abs(s[c])) < 1e-6);
    }
}

TEST_CASE("adain gradients agree with central differences") {
    Tensor x = random_tensor({2, 4, 4}, 77);
    Tensor s = random_tensor({2}, 78);
    Tensor b = random_tensor({2}, 79);
    Tensor probe = random_tensor({2, 4, 4}, 80);
    auto weighted = [&](Var y) {
        Tape& t = *y.tape;
        return sum(mean_sq_diff(y, t.constant(probe)));
    };
    auto rx = grad_check(
        [&](Var v) {
            Tape& t = *v.tape;
            return weighted(adain(v, t.constant(s), t.constant(b), 1e-8));
        },
        x);
    CHECK(rx.max_rel_error < 1e-5);
    auto rs = grad_check(
        [&](Var v) {
            Tape& t = *v.tape;
            return weighted(adain(t.constant(x), v, t.constant(b), 1e-8));
        },
        s);
    CHECK(rs.max_rel_error < 1e-5);
    auto rb = grad_check(
        [&](Var v) {
            Tape& t = *v.tape;
            return weighted(adain(t.constant(x), t.constant(s), v, 1e-8));
        },
        b);
    CHECK(rb.max_rel_error < 1e-5);
}

TEST_CASE("grad_check on simple functions") {
    auto r = grad_check([](Var v) { return sum_squares(v); }, Tensor::from({3}, {1, 2, 3}));
    CHECK(r.analytic == Tensor::from({3}, {2, 4, 6}));
    CHECK(r.max_rel_error < 1e-9);

    auto c = grad_check(
        [](Var v) {
            Tape& t = *v.tape;
            return sum(t.constant(Tensor::full({1}, 5.0)));
        },
        Tensor::from({2}, {1, 2}));
    CHECK(c.analytic == Tensor::zeros({2}));
    for (double n : c.numeric) CHECK(n == 0.0);
    CHECK(c.max_rel_error == 0.0);

    CHECK_THROWS_AS(grad_check([](Var v) { return v; }, Tensor::from({2}, {1, 2})), ContractError);
    CHECK_THROWS_AS(grad_check([](Var v) { return sum(v); }, Tensor::from({2}, {1, 2}), 0.0), ContractError);
}

TEST_CASE("grad_check subsamples large inputs") {
    auto r = grad_check([](Var v) { return sum_squares(v); }, random_tensor({200}, 4), 1e-5, 16, 9);
    CHECK(r.coords.size() == 16);
    CHECK(r.numeric.size() == 16);
    CHECK(r.max_rel_error < 1e-9);
}

TEST_CASE("tape records in topological order and visits each node once") {
    Tape tape;
    Var x = tape.parameter(random_tensor({1, 4, 4}, 1));
    Var k = tape.constant(random_tensor({2, 1, 3, 3}, 2));
    Var b = tape.constant(random_tensor({2}, 3));
    Var y = sum_squares(downsample2x(leaky_relu(conv2d(x, k, b, 1), 0.2)));
    for (std::size_t id = 0; id < tape.size(); ++id)
        for (auto in : tape.inputs(id)) CHECK(in < id);
    tape.backward(y);
    CHECK(tape.visits() == tape.size());
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("backward requires a scalar output") {
    Tape tape;
    Var x = tape.parameter(Tensor::zeros({3}));
    CHECK_THROWS_AS(tape.backward(scale(x, 2.0)), ContractError);
}

TEST_CASE("backward is bit-for-bit deterministic") {
    Tensor x = random_tensor({2, 6, 6}, 91);
    Tensor w = random_tensor({3, 2, 3, 3}, 92);
    auto run = [&] {
        Tape tape;
        Var xv = tape.parameter(x);
        Var wv = tape.parameter(w);
        Var y = conv2d(xv, wv, tape.constant(Tensor::zeros({3})), 1);
        Var z = adain(leaky_relu(y, 0.2), tape.constant(Tensor::full({3}, 1.3)),
                      tape.constant(Tensor::full({3}, 0.1)), 1e-8);
        tape.backward(sum_squares(sigmoid(z)));
        return std::pair{tape.grad(xv), tape.grad(wv)};
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

// Every differentiable primitive against central differences, random small
// shapes, ten seeds.
TEST_CASE("primitive gradients agree with central differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const std::size_t c = 1 + rng.next_u64() % 3, h = 2 + rng.next_u64() % 4, w = 2 + rng.next_u64() % 4;
        const std::size_t cout = 1 + rng.next_u64() % 3;
        Tensor x = random_tensor({c, h, w}, 100 + seed);
        Tensor k = random_tensor({cout, c, 3, 3}, 200 + seed);
        Tensor b = random_tensor({cout}, 300 + seed);
        Tensor probe_conv = random_tensor({cout, h, w}, 400 + seed);
        CAPTURE(seed);

        auto conv_x = grad_check(
            [&](Var v) {
                Tape& t = *v.tape;
                return mean_sq_diff(conv2d(v, t.constant(k), t.constant(b), 1), t.constant(probe_conv));
            },
            x);
        CHECK(conv_x.max_rel_error < 1e-5);
        auto conv_k = grad_check(
            [&](Var v) {
                Tape& t = *v.tape;
                return mean_sq_diff(conv2d(t.constant(x), v, t.constant(b), 1), t.constant(probe_conv));
            },
            k);
        CHECK(conv_k.max_rel_error < 1e-5);
        auto conv_b = grad_check(
            [&](Var v) {
                Tape& t = *v.tape;
                return mean_sq_diff(conv2d(t.constant(x), t.constant(k), v, 1), t.constant(probe_conv));
            },
            b);
        CHECK(conv_b.max_rel_error < 1e-5);

        Tensor probe_up = random_tensor({c, 2 * h, 2 * w}, 500 + seed);
        auto up = grad_check(
            [&](Var v) { return mean_sq_diff(upsample2x(v), v.tape->constant(probe_up)); }, x);
        CHECK(up.max_rel_error < 1e-5);

        // Keep inputs away from the kink so the difference quotient is smooth.
        Tensor xr = x;
        for (auto& v : xr.data())
            if (std::abs(v) < 0.05) v += 0.1;
        Tensor probe = random_tensor({c, h, w}, 600 + seed);
        auto lrelu = grad_check(
            [&](Var v) { return mean_sq_diff(leaky_relu(v, 0.2), v.tape->constant(probe)); }, xr);
        CHECK(lrelu.max_rel_error < 1e-5);

        auto sig = grad_check([&](Var v) { return mean_sq_diff(sigmoid(v), v.tape->constant(probe)); }, x);
        CHECK(sig.max_rel_error < 1e-5);

        Tensor sc = random_tensor({c}, 700 + seed);
        Tensor sh = random_tensor({c}, 800 + seed);
        auto ad = grad_check(
            [&](Var v) {
                Tape& t = *v.tape;
                return mean_sq_diff(adain(v, t.constant(sc), t.constant(sh), 1e-8), t.constant(probe));
            },
            x);
        CHECK(ad.max_rel_error < 1e-5);

        Tensor wl = random_tensor({4, 5}, 900 + seed);
        Tensor xl = random_tensor({5}, 901 + seed);
        Tensor bl = random_tensor({4}, 902 + seed);
        auto lin = grad_check(
            [&](Var v) {
                Tape& t = *v.tape;
                return sum_squares(linear(t.constant(wl), v, t.constant(bl)));
            },
            xl);
        CHECK(lin.max_rel_error < 1e-5);
        auto lin_w = grad_check(
            [&](Var v) {
                Tape& t = *v.tape;
                return sum_squares(linear(v, t.constant(xl), t.constant(bl)));
            },
            wl);
        CHECK(lin_w.max_rel_error < 1e-5);

        Tensor noise = random_tensor({1, h, w}, 903 + seed);
        auto nz = grad_check(
            [&](Var v) {
                Tape& t = *v.tape;
                return mean_sq_diff(add_noise(t.constant(x), noise, v), t.constant(probe));
            },
            sc);
        CHECK(nz.max_rel_error < 1e-5);

        if (h >= 2 && w >= 2) {
            Tensor probe_down = random_tensor({c, h / 2, w / 2}, 904 + seed);
            auto dn = grad_check(
                [&](Var v) { return mean_sq_diff(downsample2x(v), v.tape->constant(probe_down)); }, x);
            CHECK(dn.max_rel_error < 1e-5);
        }

        Tensor m = random_tensor({3, 4}, 905 + seed);
        auto rs = grad_check(
            [&](Var v) { return sum_squares(slice(row(v, 1), 1, 2)); }, m);
        CHECK(rs.max_rel_error < 1e-5);
    }
}
