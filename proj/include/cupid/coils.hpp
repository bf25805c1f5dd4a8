#pragma once

#include <cmath>
#include <vector>

#include "cupid/image.hpp"
#include "cupid/rng.hpp"

namespace cupid {

// Smooth complex receiver sensitivity maps, pixelwise normalized so the
// sum of squared magnitudes is exactly 1 everywhere.
struct CoilSensitivities {
    int nc = 0;
    int h = 0;
    int w = 0;
    std::vector<ComplexImage> maps;
};

inline CoilSensitivities make_coils(int h, int w, int nc, uint64_t seed) {
    if (nc < 1) throw DataError("make_coils: coil count must be >= 1");
    if (h < 1 || w < 1) throw DataError("make_coils: degenerate dimensions");

    Rng rng(seed);
    CoilSensitivities s;
    s.nc = nc;
    s.h = h;
    s.w = w;
    s.maps.assign(size_t(nc), ComplexImage(h, w));

    // Gaussian lobes centered just outside the image border at distinct
    // angles. Each coil carries roughly one extra phase cycle across the
    // phase-encode direction per coil index, so aliased replicas pick up
    // distinct near-roots-of-unity factors and the fold-over system stays
    // well conditioned even at nc == R.
    const double rad = 0.85;
    for (int c = 0; c < nc; ++c) {
        const double ang = 2.0 * pi * ((c + 0.5) / nc) + rng.uniform(-0.12, 0.12);
        const double cy = rad * std::sin(ang);
        const double cx = rad * std::cos(ang);
        const double width = 0.95 * (1.0 + rng.uniform(-0.1, 0.1));
        const double phi0 = rng.uniform(0.0, 2.0 * pi);
        const double ky = 2.0 * pi * (double(c) + rng.uniform(-0.08, 0.08));
        const double kx = rng.uniform(-0.6, 0.6) * pi;
        for (int r = 0; r < h; ++r) {
            for (int q = 0; q < w; ++q) {
                const double yn = double(r) / h;
                const double y = yn * 2.0 - 1.0;
                const double x = double(q) / w * 2.0 - 1.0;
                const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                const double amp = std::exp(-d2 / (2.0 * width * width));
                const double phase = phi0 + ky * yn + kx * x;
                s.maps[size_t(c)].at(r, q) = std::polar(amp, phase);
            }
        }
    }
    for (int r = 0; r < h; ++r) {
        for (int q = 0; q < w; ++q) {
            double ss = 0.0;
            for (int c = 0; c < nc; ++c) ss += std::norm(s.maps[size_t(c)].at(r, q));
            const double inv = 1.0 / std::sqrt(ss);
            for (int c = 0; c < nc; ++c) s.maps[size_t(c)].at(r, q) *= inv;
        }
    }
    return s;
}

} // namespace cupid
