#include <doctest.h>

#include "cupid/fft.hpp"
#include "cupid/image.hpp"
#include "cupid/rng.hpp"
#include "cupid/tensor.hpp"

using namespace cupid;

namespace {

ComplexImage random_image(int h, int w, uint64_t seed) {
    Rng rng(seed);
    ComplexImage x(h, w);
    for (auto& z : x.v) z = rng.cnormal();
    return x;
}

} // namespace

TEST_CASE("rng is deterministic and roughly uniform") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(7);
    double mean = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += c.uniform();
    mean /= n;
    CHECK(std::abs(mean - 0.5) < 0.02);
}

TEST_CASE("rng gaussian moments") {
    Rng rng(11);
    double m1 = 0.0, m2 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        m1 += x;
        m2 += x * x;
    }
    CHECK(std::abs(m1 / n) < 0.02);
    CHECK(std::abs(m2 / n - 1.0) < 0.03);
}

TEST_CASE("tensor shape checks") {
    Tensor a({2, 3});
    Tensor b({3, 2});
    CHECK(a.numel() == 6);
    CHECK_THROWS_AS(check_same_shape(a, b, "test"), DataError);
    a.at({1, 2}) = 5.0;
    CHECK(a.data[5] == 5.0);
}

TEST_CASE("fft roundtrip and unitarity, power-of-two and odd sizes") {
    for (int n : {16, 12, 7}) {
        ComplexImage x = random_image(n, n, uint64_t(n));
        ComplexImage k = x;
        fft2(k.v.data(), size_t(n), size_t(n), false);
        // Parseval
        CHECK(std::abs(norm2(k) - norm2(x)) < 1e-9 * norm2(x));
        ComplexImage back = k;
        fft2(back.v.data(), size_t(n), size_t(n), true);
        CHECK(rel_err(back, x) < 1e-10);
    }
}

TEST_CASE("centered fft shifts DC to the middle") {
    ComplexImage x(8, 8);
    for (auto& z : x.v) z = Complex(1.0, 0.0); // constant image: all energy at DC
    ComplexImage k = centered_fft(x);
    CHECK(std::abs(k.at(4, 4)) == doctest::Approx(8.0)); // sqrt(64) * 1
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c)
            if (r != 4 || c != 4) CHECK(std::abs(k.at(r, c)) < 1e-12);
    CHECK(rel_err(centered_ifft(k), x) < 1e-12);
}

TEST_CASE("centered fft roundtrip on odd sizes") {
    ComplexImage x = random_image(9, 11, 5);
    CHECK(rel_err(centered_ifft(centered_fft(x)), x) < 1e-10);
}

TEST_CASE("image/tensor conversions") {
    ComplexImage x = random_image(4, 6, 3);
    Tensor t = to_tensor(x);
    CHECK(t.shape == std::vector<int64_t>{2, 4, 6});
    CHECK(rel_err(to_image(t), x) == 0.0);
}
