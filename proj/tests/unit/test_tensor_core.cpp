#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "oracles.hpp"
#include "svan/adam.hpp"
#include "svan/autodiff.hpp"
#include "svan/error.hpp"
#include "svan/ops.hpp"

using namespace svan;

namespace {

struct ThreadGuard {
    std::size_t saved = num_threads();
    ~ThreadGuard() { set_num_threads(saved); }
};

}  // namespace

TEST_CASE("tensor construction and fixture round trip") {
    CHECK_THROWS_AS(Tensor4(Shape{1, 0, 2, 2}), DimensionError);
    CHECK_THROWS_AS(Tensor4(Shape{1, 1, 2, 2}, std::vector<double>(3)), DimensionError);

    Rng rng(3);
    const Tensor4 t = oracle::random_tensor({2, 3, 4, 5}, rng);
    const auto path = std::filesystem::temp_directory_path() / "svan_tensor_roundtrip.bin";
    write_tensor(t, path);
    CHECK(read_tensor(path).bitwise_equal(t));
    std::filesystem::resize_file(path, 16 + 8 * 10);
    CHECK_THROWS_AS(read_tensor(path), CorruptFileError);
    std::filesystem::remove(path);
}

TEST_CASE("conv2d hand examples") {
    const Tensor4 ones3 = Tensor4::ones({1, 1, 3, 3});
    const auto valid = ConvSpec::dense(1, 1, 3, 1, Padding::Valid);
    const Tensor4 a = conv2d(ones3, Tensor4::ones({1, 1, 3, 3}), {}, valid);
    CHECK(a.shape() == Shape{1, 1, 1, 1});
    CHECK(a.item() == 9.0);

    const auto dilated = ConvSpec::dense(1, 1, 3, 2, Padding::Valid);
    const Tensor4 b = conv2d(Tensor4::ones({1, 1, 5, 5}), Tensor4::ones({1, 1, 3, 3}), {}, dilated);
    CHECK(b.shape() == Shape{1, 1, 1, 1});
    CHECK(b.item() == 9.0);

    // Same padding keeps the size; corners see 4 of 9 taps.
    const Tensor4 c = conv2d(ones3, Tensor4::ones({1, 1, 3, 3}), {}, ConvSpec::dense(1, 1, 3));
    CHECK(c.shape() == Shape{1, 1, 3, 3});
    CHECK(c.at(0, 0, 0, 0) == 4.0);
    CHECK(c.at(0, 0, 1, 1) == 9.0);
}

TEST_CASE("conv2d rejects bad shapes") {
    const Tensor4 x = Tensor4::ones({1, 4, 6, 6});
    CHECK_THROWS_AS(conv2d(x, Tensor4::ones({4, 3, 3, 3}), {}, ConvSpec::dense(3, 4, 3)), DimensionError);
    CHECK_THROWS_AS(ConvSpec({4, 6, 3, 1, 4, Padding::Same}).validate(), DimensionError);
    CHECK_THROWS_AS(ConvSpec::dense(1, 1, 4).validate(), DimensionError);
    CHECK_THROWS_AS(conv2d(x, Tensor4::ones({4, 1, 5, 5}), {}, ConvSpec::depthwise(4, 5, 3, Padding::Valid)),
                    DimensionError);
}

TEST_CASE("conv2d matches the naive oracle for every in-network layer shape") {
    const std::vector<ConvSpec> specs{
        ConvSpec::dense(3, 8, 3), ConvSpec::depthwise(4, 5), ConvSpec::depthwise(4, 5, 3),
        ConvSpec::dense(6, 5, 1), ConvSpec::depthwise(4, 3, 3), ConvSpec{6, 4, 3, 2, 2, Padding::Same},
        ConvSpec::depthwise(3, 5, 3, Padding::Valid), ConvSpec::dense(2, 3, 3, 1, Padding::Valid)};
    Rng rng(11);
    for (const ConvSpec& s : specs) {
        const Tensor4 x = oracle::random_tensor({2, s.in_channels, 17, 19}, rng);
        const Tensor4 w = oracle::random_tensor(s.weight_shape(), rng);
        std::vector<double> bias(s.out_channels);
        for (double& b : bias) b = uniform(rng, -1, 1);
        const Tensor4 got = conv2d(x, w, bias, s);
        const Tensor4 want = oracle::naive_conv(x, w, bias, s);
        REQUIRE(got.shape() == want.shape());
        CHECK(max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("conv2d is bitwise identical across thread counts") {
    ThreadGuard guard;
    Rng rng(5);
    const ConvSpec s = ConvSpec::dense(8, 8, 3);
    const Tensor4 x = oracle::random_tensor({1, 8, 12, 12}, rng);
    const Tensor4 w = oracle::random_tensor(s.weight_shape(), rng);
    const Tensor4 g = oracle::random_tensor({1, 8, 12, 12}, rng);
    set_num_threads(1);
    const Tensor4 y1 = conv2d(x, w, {}, s);
    const Tensor4 gi1 = conv2d_grad_input(g, w, x.shape(), s);
    const Tensor4 gw1 = conv2d_grad_weight(g, x, s);
    set_num_threads(4);
    CHECK(conv2d(x, w, {}, s).bitwise_equal(y1));
    CHECK(conv2d_grad_input(g, w, x.shape(), s).bitwise_equal(gi1));
    CHECK(conv2d_grad_weight(g, x, s).bitwise_equal(gw1));
}

TEST_CASE("valid-padding chain 5x5 then 5x5 d3 shrinks like one 17x17") {
    const auto a = ConvSpec::depthwise(3, 5, 1, Padding::Valid).output_size(32, 32);
    const auto b = ConvSpec::depthwise(3, 5, 3, Padding::Valid).output_size(a.first, a.second);
    const auto dense = ConvSpec::dense(3, 3, 17, 1, Padding::Valid).output_size(32, 32);
    CHECK(b == dense);
    CHECK(b.first == 16);
}

TEST_CASE("gelu values and shape") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(gelu(10.0) == doctest::Approx(10.0).epsilon(1e-12));
    // 0.5 * (1 + erf(1/sqrt 2)) from a 30-digit mpmath evaluation.
    CHECK(std::abs(gelu(1.0) - 0.841344746068542948585232545632) < 1e-15);
    double prev = -std::numeric_limits<double>::infinity();
    for (double x = -8.0; x <= 8.0; x += 0.01) {
        if (x > -0.75) {  // monotone to the right of the minimum near -0.7518
            CHECK(gelu(x) >= prev);
        }
        prev = gelu(x);
        // x - gelu(x) = x * Phi(-x): about 5.9e-9 at 6, below 1e-12 from 7.5 on.
        if (x >= 6.0) CHECK(gelu(x) >= x - 6e-9);
        if (x >= 7.5) CHECK(gelu(x) >= x - 1e-12);
        const double h = 1e-6;
        CHECK(gelu_derivative(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-7));
    }
}

TEST_CASE("elementwise ops") {
    const Tensor4 a = Tensor4::vector({2, 3});
    const Tensor4 b = Tensor4::vector({4, 5});
    CHECK(hadamard(a, b).bitwise_equal(Tensor4::vector({8, 15})));
    CHECK(hadamard(a, Tensor4::ones(a.shape())).bitwise_equal(a));
    CHECK(hadamard(a, Tensor4::zeros(a.shape())).bitwise_equal(Tensor4::zeros(a.shape())));
    CHECK(add(Tensor4::vector({1, 2}), Tensor4::vector({3, 4})).bitwise_equal(Tensor4::vector({4, 6})));
    CHECK(add(a, Tensor4::vector({-2, -3})).sum() == 0.0);
    CHECK_THROWS_AS(add(a, Tensor4::vector({1, 2, 3})), DimensionError);
    CHECK_THROWS_AS(hadamard(a, Tensor4::vector({1})), DimensionError);
}

TEST_CASE("pixel shuffle ordering and inverse") {
    const Tensor4 x(Shape{1, 4, 1, 1}, {1, 2, 3, 4});
    const Tensor4 y = pixel_shuffle(x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.bitwise_equal(Tensor4(Shape{1, 1, 2, 2}, {1, 2, 3, 4})));
    CHECK(pixel_shuffle(Tensor4(Shape{1, 48, 4, 4}), 4).shape() == Shape{1, 3, 16, 16});
    CHECK_THROWS_AS(pixel_shuffle(Tensor4(Shape{1, 5, 2, 2}), 2), DimensionError);

    Rng rng(9);
    const Tensor4 r = oracle::random_tensor({2, 27, 5, 4}, rng);
    const Tensor4 s = pixel_shuffle(r, 3);
    CHECK(pixel_unshuffle(s, 3).bitwise_equal(r));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y0 = 0; y0 < 5; ++y0)
            for (std::size_t x0 = 0; x0 < 4; ++x0)
                for (std::size_t dy = 0; dy < 3; ++dy)
                    for (std::size_t dx = 0; dx < 3; ++dx)
                        REQUIRE(s.at(1, c, y0 * 3 + dy, x0 * 3 + dx) == r.at(1, c * 9 + dy * 3 + dx, y0, x0));
    CHECK(s.sum() == doctest::Approx(r.sum()).epsilon(1e-14));
}

TEST_CASE("pixel norm") {
    const std::vector<double> one2{1, 1}, zero2{0, 0};
    const Tensor4 flat = pixel_norm(Tensor4(Shape{1, 2, 1, 1}, {5, 5}), one2, zero2);
    CHECK(flat[0] == 0.0);
    CHECK(flat[1] == 0.0);
    const Tensor4 pair = pixel_norm(Tensor4(Shape{1, 2, 1, 1}, {1, 3}), one2, zero2);
    CHECK(pair[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-6));
    const std::vector<double> beta{0.25, 0.25};
    const Tensor4 shifted = pixel_norm(Tensor4(Shape{1, 2, 1, 1}, {1, 3}), zero2, beta);
    CHECK(shifted[0] == 0.25);
    CHECK(shifted[1] == 0.25);

    Rng rng(2);
    const std::size_t c = 16;
    const Tensor4 x = oracle::random_tensor({2, c, 6, 7}, rng, -3, 3);
    const Tensor4 y = pixel_norm(x, std::vector<double>(c, 1.0), std::vector<double>(c, 0.0));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 42; ++i) {
            double mean = 0, sq = 0;
            for (std::size_t k = 0; k < c; ++k) mean += y[y.index(n, k, 0, 0) + i] / c;
            for (std::size_t k = 0; k < c; ++k) sq += std::pow(y[y.index(n, k, 0, 0) + i] - mean, 2) / c;
            CHECK(std::abs(mean) <= 1e-9);
            CHECK(std::abs(sq - 1.0) <= 1e-4);
        }
    CHECK_THROWS_AS(pixel_norm(x, one2, zero2), DimensionError);
}

TEST_CASE("losses against a compensated-sum oracle") {
    const Tensor4 t = Tensor4::ones({1, 2, 3, 3});
    CHECK(l1_loss(t, t) == 0.0);
    CHECK(l2_loss(t, t) == 0.0);
    const Tensor4 u(t.shape(), 3.0);
    CHECK(l1_loss(u, t) == 2.0);
    CHECK(l2_loss(u, t) == 4.0);
    CHECK_THROWS_AS(l1_loss(t, Tensor4::ones({1, 2, 3, 4})), DimensionError);

    Rng rng(17);
    const Tensor4 a = oracle::random_tensor({3, 3, 31, 29}, rng);
    const Tensor4 b = oracle::random_tensor(a.shape(), rng);
    std::vector<double> abs_terms, sq_terms;
    for (std::size_t i = a.size(); i-- > 0;) {
        abs_terms.push_back(std::abs(a[i] - b[i]));
        sq_terms.push_back((a[i] - b[i]) * (a[i] - b[i]));
    }
    const double n = static_cast<double>(a.size());
    CHECK(oracle::relative_error(l1_loss(a, b), oracle::kahan_sum(abs_terms) / n) <= 1e-12);
    CHECK(oracle::relative_error(l2_loss(a, b), oracle::kahan_sum(sq_terms) / n) <= 1e-12);
}

TEST_CASE("tape basics") {
    Tape tape;
    const Var x = tape.leaf(Tensor4::vector({1, -2, 3}));
    const Var unused = tape.leaf(Tensor4::vector({7, 7}));
    tape.backward(ad::sum(x));
    CHECK(x.grad().bitwise_equal(Tensor4::ones(x.shape())));
    CHECK(unused.grad().bitwise_equal(Tensor4::zeros(unused.shape())));
    CHECK_THROWS_AS(tape.backward(x), DimensionError);

    Tape t2;
    const Tensor4 xv = Tensor4::vector({0.5, -1.5, 2.0, 3.0});
    const Var w = t2.leaf(Tensor4::vector({1.0, 2.0, -0.5, 0.25}));
    const Var xs = t2.leaf(xv);
    t2.backward(ad::l2_loss(ad::hadamard(w, xs), Tensor4::zeros(xv.shape())));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(w.grad()[i] == doctest::Approx(2.0 * w.value()[i] * xv[i] * xv[i] / 4.0).epsilon(1e-15));
}

namespace {

// Checks d(loss)/d(leaf) from the tape against central differences for every leaf entry.
void check_gradients(const std::function<Var(Tape&, std::vector<Var>&)>& build, std::vector<Tensor4> leaves,
                     double h = 1e-5, double tol = 1e-4) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor4& t : leaves) vars.push_back(tape.leaf(t));
    tape.backward(build(tape, vars));
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        for (std::size_t i = 0; i < leaves[k].size(); ++i) {
            const double numeric = oracle::central_difference(leaves[k], i, h, [&] {
                Tape probe;
                std::vector<Var> pv;
                for (const Tensor4& t : leaves) pv.push_back(probe.leaf(t));
                return build(probe, pv).value().item();
            });
            const double analytic = vars[k].grad()[i];
            INFO("leaf " << k << " entry " << i << ": analytic " << analytic << " numeric " << numeric);
            CHECK(std::abs(analytic - numeric) <= tol * std::max(1.0, std::abs(numeric)));
        }
    }
}

}  // namespace

TEST_CASE("every differentiable op passes finite differences") {
    Rng rng(23);
    const Tensor4 target = oracle::random_tensor({1, 4, 5, 5}, rng);
    auto rt = [&](Shape s) { return oracle::random_tensor(s, rng); };

    SUBCASE("dense conv with bias") {
        const ConvSpec s = ConvSpec::dense(2, 4, 3);
        check_gradients([&](Tape&, std::vector<Var>& v) { return ad::l2_loss(ad::conv2d(v[0], v[1], v[2], s), target); },
                        {rt({1, 2, 5, 5}), rt(s.weight_shape()), rt({1, 4, 1, 1})});
    }
    SUBCASE("dilated depthwise conv") {
        const ConvSpec s = ConvSpec::depthwise(4, 3, 2);
        check_gradients([&](Tape&, std::vector<Var>& v) { return ad::l2_loss(ad::conv2d(v[0], v[1], std::nullopt, s), target); },
                        {rt({1, 4, 5, 5}), rt(s.weight_shape())});
    }
    SUBCASE("gelu, hadamard, add") {
        check_gradients(
            [&](Tape&, std::vector<Var>& v) { return ad::l2_loss(ad::add(ad::hadamard(ad::gelu(v[0]), v[1]), v[0]), target); },
            {rt({1, 4, 5, 5}), rt({1, 4, 5, 5})});
    }
    SUBCASE("pixel norm") {
        check_gradients([&](Tape&, std::vector<Var>& v) { return ad::l2_loss(ad::pixel_norm(v[0], v[1], v[2]), target); },
                        {rt({1, 4, 5, 5}), rt({1, 4, 1, 1}), rt({1, 4, 1, 1})});
    }
    SUBCASE("pixel shuffle and l1") {
        const Tensor4 t2 = oracle::random_tensor({1, 1, 10, 10}, rng);
        check_gradients([&](Tape&, std::vector<Var>& v) { return ad::l1_loss(ad::pixel_shuffle(v[0], 2), t2); },
                        {rt({1, 4, 5, 5})});
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradient leaves params unchanged") {
        NamedTensors p{{"w", Tensor4::vector({1.5, -2.0})}};
        const NamedTensors g{{"w", Tensor4::zeros({1, 2, 1, 1})}};
        AdamState st;
        adam_step(p, g, st, 1e-3);
        CHECK(p.at("w").bitwise_equal(Tensor4::vector({1.5, -2.0})));
        CHECK(st.step == 1);
    }
    SUBCASE("first step with unit gradient moves by lr") {
        NamedTensors p{{"w", Tensor4::scalar(0.0)}};
        AdamState st;
        adam_step(p, {{"w", Tensor4::scalar(1.0)}}, st, 0.01);
        CHECK(std::abs(p.at("w").item() + 0.01) <= 0.01 * 1e-8);
    }
    SUBCASE("matches a scalar reference") {
        const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double w = 0.3, m = 0, v = 0;
        NamedTensors p{{"w", Tensor4::scalar(w)}};
        AdamState st;
        const double grads[] = {0.7, 0.7, -0.2};
        for (int t = 1; t <= 3; ++t) {
            const double g = grads[t - 1];
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
            adam_step(p, {{"w", Tensor4::scalar(g)}}, st, lr);
            CHECK(std::abs(p.at("w").item() - w) <= 1e-12);
        }
        CHECK(st.m.at("w").shape() == Shape{1, 1, 1, 1});
    }
}
