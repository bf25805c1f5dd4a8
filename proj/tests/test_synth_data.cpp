#include <doctest.h>

#include "cupid/acquisition.hpp"
#include "cupid/coils.hpp"
#include "cupid/mask.hpp"
#include "cupid/phantom.hpp"

#include "support/dense_oracle.hpp"

using namespace cupid;

TEST_CASE("phantom determinism, normalization, seed sensitivity") {
    ComplexImage a = make_phantom(64, 64, 7);
    ComplexImage b = make_phantom(64, 64, 7);
    CHECK(a.v == b.v); // bit-identical
    CHECK(std::abs(max_abs(a) - 1.0) < 1e-12);
    ComplexImage c = make_phantom(64, 64, 8);
    CHECK(rel_err(c, a) > 0.01);
    CHECK_THROWS_AS(make_phantom(4, 64, 0), DataError);
}

TEST_CASE("phantom has nontrivial phase") {
    ComplexImage a = make_phantom(32, 32, 3);
    double max_imag = 0.0;
    for (const auto& z : a.v) max_imag = std::max(max_imag, std::abs(z.imag()));
    CHECK(max_imag > 1e-3);
}

TEST_CASE("coil maps: unit sum of squares, single coil, determinism") {
    CoilSensitivities s = make_coils(24, 20, 5, 11);
    for (int r = 0; r < 24; ++r)
        for (int c = 0; c < 20; ++c) {
            double ss = 0.0;
            for (int k = 0; k < 5; ++k) ss += std::norm(s.maps[size_t(k)].at(r, c));
            CHECK(std::abs(ss - 1.0) < 1e-6);
        }
    CoilSensitivities one = make_coils(16, 16, 1, 2);
    for (const auto& z : one.maps[0].v) CHECK(std::abs(std::abs(z) - 1.0) < 1e-9);
    CHECK_THROWS_AS(make_coils(8, 8, 0, 1), DataError);
}

TEST_CASE("coil geometry keeps the encoding full rank (dense oracle)") {
    // 8x8, 3 coils, R=2: smallest singular value of E stays away from zero
    CoilSensitivities s = make_coils(8, 8, 3, 5);
    SamplingMask m = make_mask(8, 2, 2, MaskKind::Equidistant, 0);
    EncodingOperator enc(s, m);
    oracle::CMat E = oracle::matrix_of(
        [&](const oracle::CVec& v) {
            return oracle::kspace_to_vec(enc.apply(oracle::vec_to_image(v, 8, 8)));
        },
        64);
    const double min_sv2 = oracle::min_eig_gram(E);
    CHECK(min_sv2 > 1e-6); // squared smallest singular value
}

TEST_CASE("mask construction rules") {
    SUBCASE("R=1 samples every line") {
        SamplingMask m = make_mask(32, 1, 4, MaskKind::Equidistant, 0);
        CHECK(m.sampled_line_count() == 32);
        CHECK(m.r_effective() == doctest::Approx(1.0));
    }
    SUBCASE("H=64 R=4 acs=8: 16 equispaced lines union 8 center lines = 22") {
        SamplingMask m = make_mask(64, 4, 8, MaskKind::Equidistant, 0);
        CHECK(m.sampled_line_count() == 22);
        CHECK(m.line(32)); // DC line
        for (int r = m.acs_start(); r < m.acs_end(); ++r) CHECK(m.line(r));
        int equi = 0;
        for (int r = 0; r < 64; ++r)
            if (r % 4 == 0) {
                CHECK(m.line(r));
                ++equi;
            }
        CHECK(equi == 16);
    }
    SUBCASE("random-uniform has the same cardinality, forced ACS, live seed") {
        SamplingMask a = make_mask(64, 4, 8, MaskKind::RandomUniform, 1);
        SamplingMask b = make_mask(64, 4, 8, MaskKind::RandomUniform, 2);
        SamplingMask e = make_mask(64, 4, 8, MaskKind::Equidistant, 0);
        CHECK(a.sampled_line_count() == e.sampled_line_count());
        CHECK(b.sampled_line_count() == e.sampled_line_count());
        for (int r = a.acs_start(); r < a.acs_end(); ++r) CHECK(a.line(r));
        CHECK(a.lines != b.lines);
        SamplingMask a2 = make_mask(64, 4, 8, MaskKind::RandomUniform, 1);
        CHECK(a.lines == a2.lines);
    }
    SUBCASE("property: cardinality rule over a grid of cases") {
        for (int h : {16, 32, 48, 64}) {
            for (int r : {2, 3, 4, 6, 8}) {
                for (int acs : {2, 4, 8}) {
                    SamplingMask m = make_mask(h, r, acs, MaskKind::Equidistant, 0);
                    int expect = 0;
                    std::vector<bool> on(size_t(h), false);
                    const int anchor = (h / 2) % r;
                    for (int row = 0; row < h; ++row)
                        if (row % r == anchor) on[size_t(row)] = true;
                    for (int row = h / 2 - acs / 2; row < h / 2 - acs / 2 + acs; ++row)
                        on[size_t(row)] = true;
                    for (bool b : on) expect += b;
                    CHECK(m.sampled_line_count() == expect);
                    SamplingMask ru = make_mask(h, r, acs, MaskKind::RandomUniform, 3);
                    CHECK(ru.sampled_line_count() == expect);
                }
            }
        }
    }
    SUBCASE("rejections") {
        CHECK_THROWS_AS(make_mask(16, 17, 2, MaskKind::Equidistant, 0), DataError);
        CHECK_THROWS_AS(make_mask(16, 0, 2, MaskKind::Equidistant, 0), DataError);
        CHECK_THROWS_AS(make_mask(16, 2, 16, MaskKind::Equidistant, 0), DataError);
    }
}

TEST_CASE("mask embedding adds never-sampled outer lines") {
    SamplingMask m = make_mask(48, 4, 8, MaskKind::Equidistant, 0);
    SamplingMask e = embed_mask(m, 64);
    CHECK(e.height() == 64);
    CHECK(e.sampled_line_count() == m.sampled_line_count());
    for (int r = 0; r < 8; ++r) {
        CHECK(!e.line(r));
        CHECK(!e.line(63 - r));
    }
}

TEST_CASE("acquisition: invertible chain, masking, energy") {
    ComplexImage x = make_phantom(32, 32, 1);
    CoilSensitivities s1 = make_coils(32, 32, 1, 2);
    SamplingMask full = make_mask(32, 1, 4, MaskKind::Equidistant, 0);

    SUBCASE("sigma=0, R=1, single coil: IFFT recovers the coil-weighted image") {
        KSpaceData y = simulate_acquisition(x, s1, full, NoiseModel{0.0}, 0);
        ComplexImage img = centered_ifft(y.coils[0]);
        ComplexImage weighted(32, 32);
        for (size_t i = 0; i < weighted.v.size(); ++i) weighted.v[i] = s1.maps[0].v[i] * x.v[i];
        CHECK(rel_err(img, weighted) < 1e-10);
    }
    SUBCASE("energy preserved with unit coils and full sampling") {
        CoilSensitivities s4 = make_coils(32, 32, 4, 3);
        KSpaceData y = simulate_acquisition(x, s4, full, NoiseModel{0.0}, 0);
        CHECK(std::abs(norm2(y) - norm2(x)) < 1e-9 * norm2(x));
    }
    SUBCASE("unsampled lines are exactly zero") {
        SamplingMask m = make_mask(32, 4, 4, MaskKind::Equidistant, 0);
        KSpaceData y = simulate_acquisition(x, s1, m, NoiseModel{0.05}, 9);
        for (int r = 0; r < 32; ++r) {
            if (m.line(r)) continue;
            for (int c = 0; c < 32; ++c) CHECK(y.coils[0].at(r, c) == Complex(0, 0));
        }
    }
}

TEST_CASE("noise power matches 2 sigma^2 within 10% (Monte Carlo)") {
    ComplexImage x = make_phantom(64, 64, 4);
    CoilSensitivities s = make_coils(64, 64, 2, 5);
    SamplingMask m = make_mask(64, 4, 8, MaskKind::Equidistant, 0);
    const double sigma = 0.01;
    KSpaceData clean = simulate_acquisition(x, s, m, NoiseModel{0.0}, 0);
    double acc = 0.0;
    size_t count = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        KSpaceData noisy = simulate_acquisition(x, s, m, NoiseModel{sigma}, seed);
        for (int c = 0; c < 2; ++c)
            for (int r = 0; r < 64; ++r) {
                if (!m.line(r)) continue;
                for (int q = 0; q < 64; ++q) {
                    acc += std::norm(noisy.coils[size_t(c)].at(r, q) -
                                     clean.coils[size_t(c)].at(r, q));
                    ++count;
                }
            }
    }
    const double mean_power = acc / double(count);
    CHECK(mean_power == doctest::Approx(2 * sigma * sigma).epsilon(0.10));
}
