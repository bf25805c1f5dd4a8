#pragma once

#include <array>
#include <cmath>

#include "cupid/image.hpp"
#include "cupid/rng.hpp"

namespace cupid {

namespace detail {

struct Ellipse {
    double intensity, ax, ay, cx, cy, theta_deg;
};

// Shepp-Logan geometry with the usual contrast-enhanced intensities.
inline const std::array<Ellipse, 10>& shepp_logan_ellipses() {
    static const std::array<Ellipse, 10> e = {{
        {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
        {-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
        {-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
        {-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
        {0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
        {0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
        {0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
        {0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
        {0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
        {0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
    }};
    return e;
}

} // namespace detail

// Piecewise-smooth ellipse phantom with a smooth low-order phase ramp.
// Per-seed jitter keeps instances distinct; magnitude is normalized so
// max |value| is exactly 1.
inline ComplexImage make_phantom(int h, int w, uint64_t seed) {
    if (h < 8 || w < 8) throw DataError("make_phantom: H and W must be >= 8");

    Rng rng(seed);
    auto ellipses = detail::shepp_logan_ellipses();
    for (auto& e : ellipses) {
        e.intensity *= 1.0 + 0.10 * (rng.uniform() * 2.0 - 1.0);
        e.ax *= 1.0 + 0.05 * (rng.uniform() * 2.0 - 1.0);
        e.ay *= 1.0 + 0.05 * (rng.uniform() * 2.0 - 1.0);
        e.cx += 0.03 * (rng.uniform() * 2.0 - 1.0);
        e.cy += 0.03 * (rng.uniform() * 2.0 - 1.0);
        e.theta_deg += 4.0 * (rng.uniform() * 2.0 - 1.0);
    }
    // low-order polynomial phase, a fraction of a cycle across the FOV
    const double p1 = rng.uniform(-0.4, 0.4), p2 = rng.uniform(-0.4, 0.4);
    const double p3 = rng.uniform(-0.25, 0.25), p4 = rng.uniform(-0.25, 0.25);
    const double p5 = rng.uniform(-0.25, 0.25);

    ComplexImage img(h, w);
    const int ss = 3; // supersampling factor per axis (partial-volume edges)
    std::vector<double> mag(size_t(h) * size_t(w), 0.0);
    double max_mag = 0.0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int sr = 0; sr < ss; ++sr) {
                for (int sc = 0; sc < ss; ++sc) {
                    const double y = -((r + (sr + 0.5) / ss) / h * 2.0 - 1.0);
                    const double x = (c + (sc + 0.5) / ss) / w * 2.0 - 1.0;
                    double v = 0.0;
                    for (const auto& e : ellipses) {
                        const double t = e.theta_deg * pi / 180.0;
                        const double xr = std::cos(t) * (x - e.cx) + std::sin(t) * (y - e.cy);
                        const double yr = -std::sin(t) * (x - e.cx) + std::cos(t) * (y - e.cy);
                        if (xr * xr / (e.ax * e.ax) + yr * yr / (e.ay * e.ay) <= 1.0)
                            v += e.intensity;
                    }
                    acc += v;
                }
            }
            double m = std::max(0.0, acc / double(ss * ss));
            mag[size_t(r) * w + c] = m;
            max_mag = std::max(max_mag, m);
        }
    }
    if (max_mag <= 0.0) throw NumericError("make_phantom: degenerate all-zero phantom");
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double y = double(r) / h * 2.0 - 1.0;
            const double x = double(c) / w * 2.0 - 1.0;
            const double phase = 2.0 * pi * (p1 * x + p2 * y + p3 * x * x + p4 * x * y + p5 * y * y) * 0.25;
            img.at(r, c) = std::polar(mag[size_t(r) * w + c] / max_mag, phase);
        }
    }
    return img;
}

} // namespace cupid
