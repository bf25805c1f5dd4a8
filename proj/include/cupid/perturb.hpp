#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cupid/image.hpp"
#include "cupid/rng.hpp"

namespace cupid {

// Additive perturbation whose R-fold aliasing replicas stay disjoint in the
// field of view. Real-valued by default (zero imaginary part).
struct Perturbation {
    ComplexImage image;           // full-FOV image, zero outside the support
    std::vector<int> support;     // linear pixel indices of nonzero entries
    std::string kind;             // letter | digit | circle | rectangle | card-suit
    double rotation_deg = 0.0;
    int row = 0, col = 0;         // placement of the shape box
    double max_intensity = 0.0;
};

struct PerturbationSetConfig {
    int k = 6;             // number of perturbations
    int r = 4;             // target acceleration the fold-over rule guards
    uint64_t seed = 0;
    double max_fraction = 0.5; // intensity cap relative to unit image max
    bool complex_valued = false;

    void validate() const {
        if (k < 1) throw DataError("PerturbationSetConfig: K must be >= 1");
        if (r < 2) throw DataError("PerturbationSetConfig: fold-over rule needs R >= 2");
        if (max_fraction <= 0.0) throw DataError("PerturbationSetConfig: bad intensity bound");
    }
};

struct FoldoverReport {
    bool valid = false;
    bool rounded_shifts = false; // H not divisible by R
    int overlapping_pixels = 0;
};

// True iff the R cyclic shifts of the support by k*H/R pixels along the
// phase-encode axis are pairwise disjoint.
inline FoldoverReport validate_foldover(const Perturbation& p, int r, int h) {
    if (r < 2) throw DataError("validate_foldover: R must be >= 2");
    FoldoverReport rep;
    rep.rounded_shifts = (h % r) != 0;
    const int w = p.image.w;
    std::vector<int> shifts;
    for (int k = 0; k < r; ++k) shifts.push_back(int(std::lround(double(k) * h / double(r))));
    std::vector<uint8_t> occupied(size_t(h) * size_t(w), 0);
    for (int k = 0; k < r; ++k) {
        for (int idx : p.support) {
            const int row = idx / w, col = idx % w;
            const int rr = (row + shifts[size_t(k)]) % h;
            uint8_t& cell = occupied[size_t(rr) * size_t(w) + size_t(col)];
            if (cell) ++rep.overlapping_pixels;
            cell = 1;
        }
    }
    rep.valid = rep.overlapping_pixels == 0;
    return rep;
}

namespace detail {

inline const std::array<std::pair<char, std::array<const char*, 7>>, 10>& glyph_table() {
    static const std::array<std::pair<char, std::array<const char*, 7>>, 10> g = {{
        {'A', {{" 111 ", "1   1", "1   1", "11111", "1   1", "1   1", "1   1"}}},
        {'E', {{"11111", "1    ", "1    ", "1111 ", "1    ", "1    ", "11111"}}},
        {'F', {{"11111", "1    ", "1    ", "1111 ", "1    ", "1    ", "1    "}}},
        {'K', {{"1   1", "1  1 ", "1 1  ", "11   ", "1 1  ", "1  1 ", "1   1"}}},
        {'L', {{"1    ", "1    ", "1    ", "1    ", "1    ", "1    ", "11111"}}},
        {'T', {{"11111", "  1  ", "  1  ", "  1  ", "  1  ", "  1  ", "  1  "}}},
        {'3', {{" 111 ", "1   1", "    1", "  11 ", "    1", "1   1", " 111 "}}},
        {'5', {{"11111", "1    ", "1111 ", "    1", "    1", "1   1", " 111 "}}},
        {'7', {{"11111", "    1", "   1 ", "  1  ", " 1   ", " 1   ", " 1   "}}},
        {'2', {{" 111 ", "1   1", "    1", "   1 ", "  1  ", " 1   ", "11111"}}},
    }};
    return g;
}

// shape bitmaps on a small square canvas, 1.0 inside
inline std::vector<double> shape_bitmap(const std::string& kind, int glyph_idx, int n) {
    std::vector<double> bm(size_t(n) * size_t(n), 0.0);
    auto set_if = [&](auto&& inside) {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const double y = (r + 0.5) / n * 2.0 - 1.0;
                const double x = (c + 0.5) / n * 2.0 - 1.0;
                if (inside(x, y)) bm[size_t(r) * size_t(n) + size_t(c)] = 1.0;
            }
    };
    if (kind == "letter" || kind == "digit") {
        const auto& glyph = glyph_table()[size_t(glyph_idx) % glyph_table().size()].second;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const int gr = r * 7 / n, gc = c * 5 / n;
                if (glyph[size_t(gr)][gc] == '1') bm[size_t(r) * size_t(n) + size_t(c)] = 1.0;
            }
    } else if (kind == "circle") {
        set_if([](double x, double y) { return x * x + y * y <= 0.8 * 0.8; });
    } else if (kind == "rectangle") {
        set_if([](double x, double y) { return std::abs(x) <= 0.7 && std::abs(y) <= 0.45; });
    } else if (kind == "heart") {
        set_if([](double x, double y) {
            const double yy = -y + 0.2;
            const double a = x * x + yy * yy - 0.45;
            return a * a * a - x * x * yy * yy * yy <= 0.0;
        });
    } else if (kind == "diamond") {
        set_if([](double x, double y) { return std::abs(x) / 0.65 + std::abs(y) / 0.9 <= 1.0; });
    } else if (kind == "club") {
        set_if([](double x, double y) {
            auto disc = [](double cx, double cy, double rad, double px, double py) {
                return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= rad * rad;
            };
            const bool lobes = disc(0.0, -0.45, 0.33, x, y) || disc(-0.33, 0.05, 0.33, x, y) ||
                               disc(0.33, 0.05, 0.33, x, y);
            const bool stem = std::abs(x) <= 0.12 && y >= 0.0 && y <= 0.85;
            return lobes || stem;
        });
    } else if (kind == "spade") {
        set_if([](double x, double y) {
            const double yy = y + 0.25;
            const double a = x * x + yy * yy - 0.4;
            const bool head = a * a * a - x * x * yy * yy * yy <= 0.0;
            const bool stem = std::abs(x) <= 0.1 && y >= 0.2 && y <= 0.85;
            return head || stem;
        });
    } else {
        throw DataError("unknown perturbation shape: " + kind);
    }
    return bm;
}

} // namespace detail

namespace detail {

// rasterize one rotated glyph; returns a tight bitmap and its box size
struct RotatedShape {
    std::vector<double> pixels;
    int h = 0, w = 0;
};

inline RotatedShape rasterize_shape(const std::string& kind, int glyph_idx, int ext,
                                    double rotation_deg) {
    const int canvas = 2 * ext;
    const double ca = std::cos(rotation_deg * pi / 180.0);
    const double sa = std::sin(rotation_deg * pi / 180.0);
    std::vector<double> base = shape_bitmap(kind, glyph_idx, ext);
    std::vector<double> rot(size_t(canvas) * size_t(canvas), 0.0);
    int rmin = canvas, rmax = -1, cmin = canvas, cmax = -1;
    for (int rr = 0; rr < canvas; ++rr) {
        for (int cc = 0; cc < canvas; ++cc) {
            const double y = rr - canvas / 2.0 + 0.5;
            const double x = cc - canvas / 2.0 + 0.5;
            const double sx = ca * x + sa * y, sy = -sa * x + ca * y;
            const int sr = int(std::floor(sy + ext / 2.0));
            const int sc = int(std::floor(sx + ext / 2.0));
            if (sr < 0 || sr >= ext || sc < 0 || sc >= ext) continue;
            if (base[size_t(sr) * size_t(ext) + size_t(sc)] > 0.5) {
                rot[size_t(rr) * size_t(canvas) + size_t(cc)] = 1.0;
                rmin = std::min(rmin, rr);
                rmax = std::max(rmax, rr);
                cmin = std::min(cmin, cc);
                cmax = std::max(cmax, cc);
            }
        }
    }
    RotatedShape out;
    if (rmax < rmin) return out;
    out.h = rmax - rmin + 1;
    out.w = cmax - cmin + 1;
    out.pixels.assign(size_t(out.h) * size_t(out.w), 0.0);
    for (int rr = rmin; rr <= rmax; ++rr)
        for (int cc = cmin; cc <= cmax; ++cc)
            out.pixels[size_t(rr - rmin) * size_t(out.w) + size_t(cc - cmin)] =
                rot[size_t(rr) * size_t(canvas) + size_t(cc)];
    return out;
}

} // namespace detail

// One randomized perturbation: several rotated shapes with varying intensity,
// scattered over the whole field of view. Validity under R-fold aliasing is
// guaranteed by construction: each replica band gets its own column segment,
// and every shape fits vertically inside one band.
inline Perturbation make_perturbation(int h, int w, int r, Rng& rng, double max_fraction,
                                      bool complex_valued) {
    static const std::array<const char*, 8> kinds = {"letter", "digit",   "circle", "rectangle",
                                                     "heart",  "diamond", "club",   "spade"};
    Perturbation p;
    p.image = ComplexImage(h, w);
    p.kind = "scatter";
    p.rotation_deg = 0.0;
    p.row = p.col = 0;

    const int band_h = h / r;          // replica spacing along phase encode
    const int band_phase = int(rng.below(uint64_t(std::max(1, band_h))));
    // shuffled column segments, one per band
    std::vector<int> band_order;
    for (int b = 0; b < r; ++b) band_order.push_back(b);
    rng.shuffle(band_order);
    const int seg_w = w / r;

    const double phase = complex_valued ? rng.uniform(0.0, 2.0 * pi) : 0.0;
    int placed = 0;
    for (int seg = 0; seg < r; ++seg) {
        const int band = band_order[size_t(seg)];
        const int col_lo = seg * seg_w;
        const int col_hi = (seg == r - 1) ? w : (seg + 1) * seg_w;
        const int shapes_here = 1 + int(rng.below(2));
        for (int sidx = 0; sidx < shapes_here; ++sidx) {
            const std::string kind = kinds[size_t(rng.below(kinds.size()))];
            const int glyph_idx = int(rng.below(10));
            const double rot_deg = rng.uniform(0.0, 360.0);
            const int max_ext = std::max(4, band_h - 2);
            const int lo_ext = std::min(5, max_ext);
            const int ext = lo_ext + int(rng.below(uint64_t(std::max(1, max_ext - lo_ext))));
            detail::RotatedShape shape = detail::rasterize_shape(kind, glyph_idx, ext, rot_deg);
            if (shape.h == 0 || shape.h > band_h || shape.w >= col_hi - col_lo) continue;

            const int row0 =
                (band * band_h + band_phase + int(rng.below(uint64_t(band_h - shape.h + 1)))) % h;
            const int col0 = col_lo + int(rng.below(uint64_t(col_hi - col_lo - shape.w)));
            if (row0 + shape.h > h) continue; // keep shapes unwrapped

            const double c0 = rng.uniform(0.5, 1.0) * max_fraction;
            const double gx = rng.uniform(-0.6, 0.6) * max_fraction;
            const double gy = rng.uniform(-0.6, 0.6) * max_fraction;
            for (int rr = 0; rr < shape.h; ++rr) {
                for (int cc = 0; cc < shape.w; ++cc) {
                    if (shape.pixels[size_t(rr) * size_t(shape.w) + size_t(cc)] <= 0.5) continue;
                    const double fy = shape.h > 1 ? double(rr) / (shape.h - 1) - 0.5 : 0.0;
                    const double fx = shape.w > 1 ? double(cc) / (shape.w - 1) - 0.5 : 0.0;
                    const double inten =
                        std::clamp(c0 + gx * fx + gy * fy, 0.1 * max_fraction, max_fraction);
                    const int prow = row0 + rr, pcol = col0 + cc;
                    if (p.image.at(prow, pcol) != Complex(0, 0)) continue;
                    p.image.at(prow, pcol) = std::polar(inten, phase);
                    p.support.push_back(prow * w + pcol);
                    p.max_intensity = std::max(p.max_intensity, inten);
                }
            }
            ++placed;
        }
    }
    if (placed == 0 || p.support.empty())
        throw NumericError("perturbation rasterized to empty support");
    std::sort(p.support.begin(), p.support.end());
    return p;
}

// K validated perturbations, rejection-sampled; deterministic per seed.
inline std::vector<Perturbation> generate_set(const PerturbationSetConfig& cfg, int h, int w) {
    cfg.validate();
    Rng rng(cfg.seed);
    std::vector<Perturbation> out;
    out.reserve(size_t(cfg.k));
    int rejections = 0;
    while (int(out.size()) < cfg.k) {
        Perturbation p = make_perturbation(h, w, cfg.r, rng, cfg.max_fraction, cfg.complex_valued);
        FoldoverReport rep = validate_foldover(p, cfg.r, h);
        if (rep.valid) {
            out.push_back(std::move(p));
        } else if (++rejections > 1000) {
            throw NumericError("generate_set: gave up after 1000 rejections; last failure had " +
                               std::to_string(rep.overlapping_pixels) +
                               " overlapping replica pixels (H=" + std::to_string(h) +
                               ", R=" + std::to_string(cfg.r) + ")");
        }
    }
    return out;
}

// Binary container so a training run's perturbations can be reproduced.
inline void save_perturbations(const std::string& path, const std::vector<Perturbation>& ps) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open perturbation file for writing: " + path);
    f.write("CPIDPERT", 8);
    uint32_t n = uint32_t(ps.size());
    f.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& p : ps) {
        uint32_t hw[2] = {uint32_t(p.image.h), uint32_t(p.image.w)};
        f.write(reinterpret_cast<const char*>(hw), 8);
        uint32_t klen = uint32_t(p.kind.size());
        f.write(reinterpret_cast<const char*>(&klen), 4);
        f.write(p.kind.data(), klen);
        f.write(reinterpret_cast<const char*>(&p.rotation_deg), 8);
        int32_t rc[2] = {p.row, p.col};
        f.write(reinterpret_cast<const char*>(rc), 8);
        f.write(reinterpret_cast<const char*>(p.image.v.data()), long(p.image.v.size() * 16));
    }
    if (!f) throw DataError("perturbation write failed: " + path);
}

inline std::vector<Perturbation> load_perturbations(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open perturbation file: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "CPIDPERT", 8) != 0)
        throw DataError("not a perturbation file: " + path);
    uint32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    std::vector<Perturbation> out(n);
    for (auto& p : out) {
        uint32_t hw[2];
        f.read(reinterpret_cast<char*>(hw), 8);
        uint32_t klen = 0;
        f.read(reinterpret_cast<char*>(&klen), 4);
        p.kind.resize(klen);
        f.read(p.kind.data(), klen);
        f.read(reinterpret_cast<char*>(&p.rotation_deg), 8);
        int32_t rc[2];
        f.read(reinterpret_cast<char*>(rc), 8);
        p.row = rc[0];
        p.col = rc[1];
        p.image = ComplexImage(int(hw[0]), int(hw[1]));
        f.read(reinterpret_cast<char*>(p.image.v.data()), long(p.image.v.size() * 16));
        for (int i = 0; i < int(p.image.v.size()); ++i)
            if (p.image.v[size_t(i)] != Complex(0, 0)) {
                p.support.push_back(i);
                p.max_intensity = std::max(p.max_intensity, std::abs(p.image.v[size_t(i)]));
            }
    }
    if (!f) throw DataError("truncated perturbation file: " + path);
    return out;
}

} // namespace cupid
