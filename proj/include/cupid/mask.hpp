#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "cupid/common.hpp"
#include "cupid/rng.hpp"

namespace cupid {

enum class MaskKind : uint8_t { Equidistant = 0, RandomUniform = 1 };

inline std::string to_string(MaskKind k) {
    return k == MaskKind::Equidistant ? "equidistant" : "random-uniform";
}

inline MaskKind mask_kind_from_string(const std::string& s) {
    if (s == "equidistant") return MaskKind::Equidistant;
    if (s == "random-uniform" || s == "random") return MaskKind::RandomUniform;
    throw DataError("unknown mask kind: " + s);
}

// Cartesian phase-encode mask. Lines index the centered k-space rows
// (DC line sits at h/2); the readout direction is always fully sampled.
struct SamplingMask {
    std::vector<uint8_t> lines; // length H, 1 = sampled
    int r_nominal = 1;
    int acs_lines = 0;
    MaskKind kind = MaskKind::Equidistant;
    uint64_t seed = 0;

    int height() const { return int(lines.size()); }
    bool line(int row) const { return lines[size_t(row)] != 0; }

    int sampled_line_count() const {
        int n = 0;
        for (uint8_t b : lines) n += b;
        return n;
    }

    double r_effective() const {
        const int n = sampled_line_count();
        return n > 0 ? double(height()) / double(n) : 0.0;
    }

    int acs_start() const { return height() / 2 - acs_lines / 2; }
    int acs_end() const { return acs_start() + acs_lines; } // one past the last ACS line
};

// Line set of the equidistant rule: every R-th centered line (anchored so the
// DC line is sampled) plus the centered ACS block. Both mask kinds share this
// cardinality so instances stay comparable across patterns.
inline std::vector<uint8_t> equidistant_lines(int h, int r, int acs) {
    std::vector<uint8_t> lines(size_t(h), 0);
    const int anchor = (h / 2) % r;
    for (int c = 0; c < h; ++c)
        if (c % r == anchor) lines[size_t(c)] = 1;
    const int a0 = h / 2 - acs / 2;
    for (int c = a0; c < a0 + acs; ++c) lines[size_t(c)] = 1;
    return lines;
}

inline SamplingMask make_mask(int h, int r, int acs_lines, MaskKind kind, uint64_t seed) {
    if (h < 1) throw DataError("make_mask: H must be positive");
    if (r < 1) throw DataError("make_mask: R must be >= 1");
    if (r > h) throw DataError("make_mask: R exceeds number of lines");
    if (acs_lines >= h) throw DataError("make_mask: ACS block must be smaller than H");
    if (acs_lines < 0) throw DataError("make_mask: negative ACS count");

    SamplingMask m;
    m.r_nominal = r;
    m.acs_lines = acs_lines;
    m.kind = kind;
    m.seed = seed;

    const std::vector<uint8_t> equi = equidistant_lines(h, r, acs_lines);
    if (kind == MaskKind::Equidistant) {
        m.lines = equi;
        return m;
    }

    // random-uniform: same total line count, ACS forced on, remaining lines
    // drawn without replacement from outside the ACS block
    int target = 0;
    for (uint8_t b : equi) target += b;
    m.lines.assign(size_t(h), 0);
    const int a0 = h / 2 - acs_lines / 2;
    for (int c = a0; c < a0 + acs_lines; ++c) m.lines[size_t(c)] = 1;
    std::vector<int> pool;
    for (int c = 0; c < h; ++c)
        if (!m.lines[size_t(c)]) pool.push_back(c);
    Rng rng(seed);
    rng.shuffle(pool);
    int need = target - acs_lines;
    for (int i = 0; i < need && i < int(pool.size()); ++i) m.lines[size_t(pool[size_t(i)])] = 1;
    return m;
}

// Embed an acquisition-grid mask into a larger display grid whose outer lines
// are never sampled, mirroring vendor zero-padding of the reconstruction grid.
inline SamplingMask embed_mask(const SamplingMask& m, int display_h) {
    if (display_h < m.height()) throw DataError("embed_mask: display grid smaller than mask");
    SamplingMask out = m;
    out.lines.assign(size_t(display_h), 0);
    const int off = (display_h - m.height()) / 2;
    for (int c = 0; c < m.height(); ++c) out.lines[size_t(c + off)] = m.lines[size_t(c)];
    return out;
}

} // namespace cupid
