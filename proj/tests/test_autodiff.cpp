#include <doctest.h>

#include <functional>

#include "cupid/autodiff.hpp"
#include "cupid/phantom.hpp"
#include "cupid/rng.hpp"

using namespace cupid;
using namespace cupid::ad;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

// central finite differences of a scalar function of one leaf
double fd_grad(const std::function<double(const Tensor&)>& f, Tensor at, size_t idx,
               double step = 1e-6) {
    Tensor plus = at, minus = at;
    plus.data[idx] += step;
    minus.data[idx] -= step;
    return (f(plus) - f(minus)) / (2 * step);
}

// compare analytic to FD gradients on a sample of coordinates
void check_gradients(const std::function<Var(const Var&)>& build, const Tensor& at,
                     double tol = 1e-6, double step = 1e-6) {
    Var leaf = Var::leaf(at, true);
    Var loss = build(leaf);
    backward(loss);
    REQUIRE(!leaf.grad().data.empty());
    auto value_at = [&](const Tensor& t) {
        return build(Var::leaf(t, false)).value().data[0];
    };
    Rng pick(99);
    const size_t n = at.data.size();
    double gmax = 0.0;
    for (double g : leaf.grad().data) gmax = std::max(gmax, std::abs(g));
    for (int trial = 0; trial < 25; ++trial) {
        const size_t i = size_t(pick.below(n));
        const double fd = fd_grad(value_at, at, i, step);
        const double an = leaf.grad().data[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6 * gmax, 1e-12});
        CHECK(std::abs(fd - an) / denom < tol);
    }
}

} // namespace

TEST_CASE("elementwise op values") {
    Tensor t({3});
    t.data = {-1.0, 0.0, 2.0};
    Var x = Var::leaf(t, false);
    CHECK(relu(x).value().data == std::vector<double>{0.0, 0.0, 2.0});
    CHECK(abs_smooth(x).value().data == std::vector<double>{1.0, 0.0, 2.0});
    CHECK(sum(x).value().data[0] == 1.0);
    CHECK(mean(x).value().data[0] == doctest::Approx(1.0 / 3));
    CHECK(maxval(x).value().data[0] == 2.0);
    CHECK(norm1(x).value().data[0] == 3.0);
    CHECK(norm2(x).value().data[0] == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("shape mismatch names both shapes") {
    Var a = Var::leaf(Tensor({2, 3}), false);
    Var b = Var::leaf(Tensor({3, 2}), false);
    try {
        add(a, b);
        FAIL("expected throw");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
        CHECK(std::string(e.what()).find("[3,2]") != std::string::npos);
    }
}

TEST_CASE("non-finite results are rejected naming the op") {
    Tensor t({2});
    t.data = {1e308, 1e308};
    Var x = Var::leaf(t, false);
    try {
        mul(x, x);
        FAIL("expected throw");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("mul") != std::string::npos);
    }
}

TEST_CASE("backward requires a scalar") {
    Var x = Var::leaf(random_tensor({4}, 1), true);
    CHECK_THROWS_AS(backward(relu(x)), DataError);
}

TEST_CASE("quadratic gradient is exactly 2w") {
    Tensor w = random_tensor({4, 4}, 7);
    Var leaf = Var::leaf(w, true);
    backward(sum(mul(leaf, leaf)));
    for (size_t i = 0; i < w.data.size(); ++i)
        CHECK(leaf.grad().data[i] == doctest::Approx(2 * w.data[i]).epsilon(1e-12));
}

TEST_CASE("Parseval: gradient of ||FFT x||^2 is 2x") {
    Tensor x = random_tensor({2, 16, 16}, 3);
    Var leaf = Var::leaf(x, true);
    Var k = fft2c(leaf);
    backward(sum(mul(k, k)));
    for (size_t i = 0; i < x.data.size(); ++i)
        CHECK(leaf.grad().data[i] == doctest::Approx(2 * x.data[i]).epsilon(1e-10));
}

TEST_CASE("fft roundtrip inside the graph") {
    Tensor x = random_tensor({2, 16, 16}, 5);
    Var leaf = Var::leaf(x, false);
    Var back = fft2c(fft2c(leaf), /*inverse=*/true);
    double err = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i)
        err = std::max(err, std::abs(back.value().data[i] - x.data[i]));
    CHECK(err < 1e-10);
}

TEST_CASE("conv2d impulse response recovers the kernel") {
    Tensor x({1, 7, 7});
    x.at({0, 3, 3}) = 1.0;
    Tensor w = random_tensor({1, 1, 3, 3}, 9);
    Var y = conv2d(Var::leaf(x, false), Var::leaf(w, false), Var::leaf(Tensor({1}), false));
    for (int u = 0; u < 3; ++u)
        for (int v = 0; v < 3; ++v)
            CHECK(y.value().at({0, 2 + u, 2 + v}) ==
                  doctest::Approx(w.at({0, 0, u, v})).epsilon(1e-14));
}

TEST_CASE("gradient checks per op") {
    SUBCASE("mul + relu + mean") {
        check_gradients(
            [](const Var& x) { return mean(relu(mul(x, scale(x, 0.5)))); },
            random_tensor({5, 5}, 11), 1e-5);
    }
    SUBCASE("abs_smooth") {
        check_gradients([](const Var& x) { return sum(abs_smooth(x, 0.05)); },
                        random_tensor({17}, 12), 1e-5);
    }
    SUBCASE("norm2") {
        check_gradients([](const Var& x) { return norm2(x); }, random_tensor({9}, 13), 1e-5);
    }
    SUBCASE("cmag") {
        check_gradients([](const Var& x) { return sum(cmag(x)); },
                        random_tensor({2, 4, 4}, 14), 1e-4);
    }
    SUBCASE("conv2d w.r.t. input, weights and bias") {
        Tensor x = random_tensor({2, 6, 6}, 15);
        Tensor w = random_tensor({3, 2, 3, 3}, 16, 0.5);
        Tensor b = random_tensor({3}, 17, 0.1);
        check_gradients(
            [&](const Var& xl) {
                return norm2(conv2d(xl, Var::leaf(w, false), Var::leaf(b, false)));
            },
            x, 1e-5);
        check_gradients(
            [&](const Var& wl) {
                return norm2(conv2d(Var::leaf(x, false), wl, Var::leaf(b, false)));
            },
            w, 1e-5);
        check_gradients(
            [&](const Var& bl) {
                return norm2(conv2d(Var::leaf(x, false), Var::leaf(w, false), bl));
            },
            b, 1e-5);
    }
    SUBCASE("concat and slice") {
        check_gradients(
            [](const Var& x) {
                Var a = slice_ch(x, 0, 1);
                Var b = slice_ch(x, 1, 2);
                return norm2(concat_ch({b, a}));
            },
            random_tensor({3, 4, 4}, 18), 1e-5);
    }
    SUBCASE("grid transforms") {
        for (auto g : {GridTransform::Rot90, GridTransform::Rot180, GridTransform::Rot270,
                       GridTransform::FlipH, GridTransform::FlipV}) {
            check_gradients(
                [g](const Var& x) { return norm2(grid_transform(x, g)); },
                random_tensor({2, 6, 6}, 19), 1e-5);
        }
    }
}

TEST_CASE("grid transforms are involutive or 4-cycles") {
    Tensor x = random_tensor({2, 6, 6}, 23);
    Var leaf = Var::leaf(x, false);
    CHECK(grid_transform(grid_transform(leaf, GridTransform::FlipH), GridTransform::FlipH)
              .value()
              .data == x.data);
    CHECK(grid_transform(grid_transform(leaf, GridTransform::Rot180), GridTransform::Rot180)
              .value()
              .data == x.data);
    Var r = grid_transform(grid_transform(grid_transform(grid_transform(leaf,
               GridTransform::Rot90), GridTransform::Rot90), GridTransform::Rot90),
               GridTransform::Rot90);
    CHECK(r.value().data == x.data);
}

TEST_CASE("adjointness of every linear graph op (dot-product test)") {
    // <L u, v> == <u, L^H v> via backward of sum(mul(L u, v))
    auto dot_test = [](const std::function<Var(const Var&)>& op, std::vector<int64_t> in_shape,
                       uint64_t seed) {
        Tensor u = random_tensor(in_shape, seed);
        Var ul = Var::leaf(u, true);
        Var lu = op(ul);
        Tensor v = random_tensor(lu.value().shape, seed + 1);
        backward(sum(mul(lu, Var::leaf(v, false))));
        // <L u, v>
        double lhs = 0.0;
        for (size_t i = 0; i < v.data.size(); ++i) lhs += lu.value().data[i] * v.data[i];
        // <u, L^H v> = sum u .* grad (grad = L^H v by linearity)
        double rhs = 0.0;
        for (size_t i = 0; i < u.data.size(); ++i) rhs += u.data[i] * ul.grad().data[i];
        CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, std::abs(lhs)));
    };

    auto coils = std::make_shared<const CoilSensitivities>(make_coils(8, 8, 3, 4));
    auto mask = std::make_shared<const SamplingMask>(make_mask(8, 2, 2, MaskKind::Equidistant, 0));
    auto enc = std::make_shared<const EncodingOperator>(*coils, *mask);
    auto smap = std::make_shared<const ComplexImage>(coils->maps[1]);
    auto wt = std::make_shared<const Dtcwt>(16, 16, 2);

    for (uint64_t s = 0; s < 20; ++s) {
        dot_test([](const Var& x) { return fft2c(x); }, {2, 8, 8}, 100 + s);
        dot_test([](const Var& x) { return fft2c(x, true); }, {2, 8, 8}, 200 + s);
        dot_test([&](const Var& x) { return cmul_const(x, smap); }, {2, 8, 8}, 300 + s);
        dot_test([&](const Var& x) { return mask_rows(x, mask); }, {2, 8, 8}, 400 + s);
        dot_test([&](const Var& x) { return encode_apply(x, enc); }, {2, 8, 8}, 500 + s);
        dot_test([&](const Var& x) { return encode_normal(x, enc); }, {2, 8, 8}, 600 + s);
        dot_test([&](const Var& x) { return dtcwt_forward(x, wt); }, {2, 16, 16}, 700 + s);
        dot_test([](const Var& x) { return grid_transform(x, GridTransform::Rot90); }, {2, 8, 8},
                 800 + s);
    }
}

TEST_CASE("df_block gradients match the dense resolvent rule") {
    auto coils = make_coils(8, 8, 3, 4);
    auto mask = make_mask(8, 2, 2, MaskKind::Equidistant, 0);
    auto enc = std::make_shared<const EncodingOperator>(coils, mask);
    const double mu = 0.4;
    Tensor z = random_tensor({2, 8, 8}, 31);
    Tensor rhs = random_tensor({2, 8, 8}, 32);
    CgConfig cfg{400, 1e-13};
    check_gradients(
        [&](const Var& zl) {
            return norm2(df_block(zl, Var::leaf(rhs, false), enc, mu, cfg));
        },
        z, 1e-5);
    check_gradients(
        [&](const Var& rl) {
            return norm2(df_block(Var::leaf(z, false), rl, enc, mu, cfg));
        },
        rhs, 1e-5);
    // trainable mu
    Tensor mu_t({1});
    mu_t.data[0] = mu;
    check_gradients(
        [&](const Var& ml) {
            return norm2(df_block(Var::leaf(z, false), Var::leaf(rhs, false), enc, mu, cfg, ml));
        },
        mu_t, 1e-4);
}

TEST_CASE("determinism: identical seeds give bit-identical values and gradients") {
    auto run = [] {
        Tensor x = random_tensor({2, 8, 8}, 77);
        Var leaf = Var::leaf(x, true);
        Var loss = mean(cmag(fft2c(relu(scale(leaf, 1.3)))));
        backward(loss);
        return std::make_pair(loss.value().data[0], leaf.grad().data);
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}
