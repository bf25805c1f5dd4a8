#pragma once

#include <map>
#include <utility>
#include <vector>

#include "cupid/encoding.hpp"

namespace cupid {

namespace detail {

// Cholesky solve of the normal equations G w = rhs for a Hermitian positive
// definite G (N x N, row-major). Throws when a pivot collapses, reporting the
// effective rank at failure.
inline void cholesky_solve_inplace(std::vector<Complex>& G, int n, std::vector<Complex>& rhs,
                                   int nrhs) {
    double trace = 0.0;
    for (int i = 0; i < n; ++i) trace += std::real(G[size_t(i) * n + i]);
    const double floor = 1e-12 * (trace / std::max(1, n));
    for (int j = 0; j < n; ++j) {
        double d = std::real(G[size_t(j) * n + j]);
        for (int k = 0; k < j; ++k) d -= std::norm(G[size_t(j) * n + k]);
        if (!(d > floor))
            throw NumericError("grappa: calibration system is rank deficient (rank " +
                               std::to_string(j) + " of " + std::to_string(n) + ")");
        const double lj = std::sqrt(d);
        G[size_t(j) * n + j] = Complex(lj, 0.0);
        for (int i = j + 1; i < n; ++i) {
            Complex s = G[size_t(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= G[size_t(i) * n + k] * std::conj(G[size_t(j) * n + k]);
            G[size_t(i) * n + j] = s / lj;
        }
    }
    // forward then backward substitution per right-hand side
    for (int r = 0; r < nrhs; ++r) {
        Complex* b = rhs.data() + size_t(r) * n;
        for (int i = 0; i < n; ++i) {
            Complex s = b[i];
            for (int k = 0; k < i; ++k) s -= G[size_t(i) * n + k] * b[k];
            b[i] = s / std::real(G[size_t(i) * n + i]);
        }
        for (int i = n - 1; i >= 0; --i) {
            Complex s = b[i];
            for (int k = i + 1; k < n; ++k) s -= std::conj(G[size_t(k) * n + i]) * b[k];
            b[i] = s / std::real(G[size_t(i) * n + i]);
        }
    }
}

} // namespace detail

// Shift-invariant k-space interpolation weights, fit on the ACS block.
// Missing lines are keyed by the distances (da, db) to the nearest sampled
// neighbors above and below; equidistant masks produce R-1 keys.
struct GrappaKernel {
    int nc = 0;
    int kx_taps = 5;
    // key (da, db) -> weights [target coil][source coil * 2 rows * kx_taps]
    std::map<std::pair<int, int>, std::vector<std::vector<Complex>>> weights;
    std::map<std::pair<int, int>, double> fit_residual; // relative, on ACS
};

namespace detail {

inline std::vector<std::pair<int, int>> missing_line_keys(const SamplingMask& mask) {
    const int h = mask.height();
    std::vector<std::pair<int, int>> keys;
    for (int m = 0; m < h; ++m) {
        if (mask.line(m)) continue;
        int da = 0, db = 0;
        for (int d = 1; d <= h; ++d)
            if (mask.line(((m - d) % h + h) % h)) {
                da = d;
                break;
            }
        for (int d = 1; d <= h; ++d)
            if (mask.line((m + d) % h)) {
                db = d;
                break;
            }
        if (da == 0 || db == 0) throw DataError("grappa: mask has no sampled lines");
        keys.emplace_back(da, db);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    return keys;
}

} // namespace detail

inline GrappaKernel grappa_calibrate(const KSpaceData& acq, int kx_taps = 5) {
    const SamplingMask& mask = acq.mask;
    const int nc = acq.nc, w = acq.w;
    const int a0 = mask.acs_start(), a1 = mask.acs_end();
    if (mask.acs_lines < 2) throw DataError("grappa: calibration needs an ACS block");
    if (kx_taps < 1 || kx_taps % 2 == 0) throw DataError("grappa: kx_taps must be odd");
    auto keys = detail::missing_line_keys(mask);
    if (keys.empty()) {
        GrappaKernel k;
        k.nc = nc;
        k.kx_taps = kx_taps;
        return k; // fully sampled, nothing to fit
    }
    if (nc < 2)
        throw NumericError(
            "grappa: calibration underdetermined with a single coil at R > 1 "
            "(source rank cannot resolve missing lines)");

    GrappaKernel kern;
    kern.nc = nc;
    kern.kx_taps = kx_taps;
    const int half = kx_taps / 2;
    const int nsrc = nc * 2 * kx_taps;
    const int h = mask.height();

    for (auto [da, db] : keys) {
        const int t_lo = a0 + da, t_hi = a1 - 1 - db; // target rows inside ACS
        // On regular patterns the kernel relation only holds at the missing
        // rows' phase, so calibration targets are restricted to rows congruent
        // to a missing row with this gap geometry.
        std::vector<uint8_t> phase_ok(size_t(mask.r_nominal), 1);
        if (mask.kind == MaskKind::Equidistant && mask.r_nominal > 1) {
            std::fill(phase_ok.begin(), phase_ok.end(), uint8_t(0));
            for (int m = 0; m < h; ++m) {
                if (mask.line(m)) continue;
                const bool up = mask.line(((m - da) % h + h) % h);
                const bool dn = mask.line((m + db) % h);
                bool nearest = up && dn;
                for (int d = 1; nearest && d < da; ++d)
                    if (mask.line(((m - d) % h + h) % h)) nearest = false;
                for (int d = 1; nearest && d < db; ++d)
                    if (mask.line((m + d) % h)) nearest = false;
                if (nearest) phase_ok[size_t(m % mask.r_nominal)] = 1;
            }
        }
        std::vector<int> targets;
        for (int t = t_lo; t <= t_hi; ++t)
            if (phase_ok[size_t(t % mask.r_nominal)]) targets.push_back(t);

        const int cols = w - 2 * half;
        const int m_eqs = int(targets.size()) * cols;
        if (m_eqs < nsrc)
            throw NumericError("grappa: ACS too small for gap (" + std::to_string(da) + "," +
                               std::to_string(db) + "): " + std::to_string(m_eqs) +
                               " equations for " + std::to_string(nsrc) + " unknowns");

        std::vector<Complex> A(size_t(m_eqs) * nsrc);
        std::vector<std::vector<Complex>> b;
        b.assign(size_t(nc), std::vector<Complex>(size_t(m_eqs)));
        int eq = 0;
        for (int t : targets) {
            for (int x = half; x < w - half; ++x) {
                Complex* row = A.data() + size_t(eq) * nsrc;
                int s = 0;
                for (int c = 0; c < nc; ++c)
                    for (int dr : {-da, db})
                        for (int dx = -half; dx <= half; ++dx)
                            row[s++] = acq.coils[size_t(c)].at(t + dr, x + dx);
                for (int c = 0; c < nc; ++c) b[size_t(c)][size_t(eq)] = acq.coils[size_t(c)].at(t, x);
                ++eq;
            }
        }
        // normal equations, one factorization shared by all target coils
        std::vector<Complex> G(size_t(nsrc) * nsrc, Complex(0, 0));
        for (int e = 0; e < m_eqs; ++e) {
            const Complex* row = A.data() + size_t(e) * nsrc;
            for (int i = 0; i < nsrc; ++i)
                for (int j = 0; j <= i; ++j) G[size_t(i) * nsrc + j] += std::conj(row[i]) * row[j];
        }
        for (int i = 0; i < nsrc; ++i)
            for (int j = i + 1; j < nsrc; ++j) G[size_t(i) * nsrc + j] = std::conj(G[size_t(j) * nsrc + i]);
        std::vector<Complex> rhs(size_t(nc) * nsrc, Complex(0, 0));
        for (int c = 0; c < nc; ++c)
            for (int e = 0; e < m_eqs; ++e) {
                const Complex* row = A.data() + size_t(e) * nsrc;
                const Complex bv = b[size_t(c)][size_t(e)];
                for (int i = 0; i < nsrc; ++i) rhs[size_t(c) * nsrc + i] += std::conj(row[i]) * bv;
            }
        detail::cholesky_solve_inplace(G, nsrc, rhs, nc);

        auto& wk = kern.weights[{da, db}];
        wk.assign(size_t(nc), std::vector<Complex>(size_t(nsrc)));
        double res2 = 0.0, ref2 = 0.0;
        for (int c = 0; c < nc; ++c) {
            std::copy(rhs.begin() + size_t(c) * nsrc, rhs.begin() + size_t(c + 1) * nsrc,
                      wk[size_t(c)].begin());
            for (int e = 0; e < m_eqs; ++e) {
                const Complex* row = A.data() + size_t(e) * nsrc;
                Complex pred(0, 0);
                for (int i = 0; i < nsrc; ++i) pred += row[i] * wk[size_t(c)][size_t(i)];
                res2 += std::norm(pred - b[size_t(c)][size_t(e)]);
                ref2 += std::norm(b[size_t(c)][size_t(e)]);
            }
        }
        for (auto& coil_w : wk)
            for (const Complex& z : coil_w)
                if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
                    throw NumericError("grappa: non-finite calibration weights");
        kern.fit_residual[{da, db}] = ref2 > 0 ? std::sqrt(res2 / ref2) : 0.0;
    }
    return kern;
}

// Fill missing lines with the calibrated kernel; sampled entries pass through
// bit-identical. Row and column neighbors wrap cyclically.
inline KSpaceData grappa_reconstruct(const KSpaceData& acq, const GrappaKernel& kern) {
    if (acq.nc != kern.nc && !kern.weights.empty())
        throw DataError("grappa_reconstruct: coil count mismatch");
    const int h = acq.h, w = acq.w, nc = acq.nc;
    const int half = kern.kx_taps / 2;
    KSpaceData out = acq;
    out.mask.lines.assign(size_t(h), 1); // interpolated output is fully determined
    for (int m = 0; m < h; ++m) {
        if (acq.mask.line(m)) continue;
        int da = 0, db = 0;
        for (int d = 1; d <= h; ++d)
            if (acq.mask.line(((m - d) % h + h) % h)) {
                da = d;
                break;
            }
        for (int d = 1; d <= h; ++d)
            if (acq.mask.line((m + d) % h)) {
                db = d;
                break;
            }
        auto it = kern.weights.find({da, db});
        if (it == kern.weights.end())
            throw DataError("grappa_reconstruct: no kernel for gap (" + std::to_string(da) + "," +
                            std::to_string(db) + ")");
        const int up = ((m - da) % h + h) % h;
        const int dn = (m + db) % h;
        for (int x = 0; x < w; ++x) {
            for (int ct = 0; ct < nc; ++ct) {
                Complex v(0, 0);
                const auto& wt = it->second[size_t(ct)];
                int s = 0;
                for (int cs = 0; cs < nc; ++cs) {
                    for (int row : {up, dn}) {
                        for (int dx = -half; dx <= half; ++dx) {
                            const int xx = ((x + dx) % w + w) % w;
                            v += wt[size_t(s++)] * acq.coils[size_t(cs)].at(row, xx);
                        }
                    }
                }
                out.coils[size_t(ct)].at(m, x) = v;
            }
        }
    }
    return out;
}

// Sensitivity-weighted combination of interpolated k-space into one image.
inline ComplexImage grappa_combine(const KSpaceData& full, const CoilSensitivities& sens) {
    ComplexImage out(full.h, full.w);
    for (int c = 0; c < full.nc; ++c) {
        ComplexImage img = centered_ifft(full.coils[size_t(c)]);
        for (size_t i = 0; i < out.v.size(); ++i)
            out.v[i] += std::conj(sens.maps[size_t(c)].v[i]) * img.v[i];
    }
    return out;
}

// Root-sum-of-squares magnitude combination (zero phase).
inline ComplexImage grappa_combine_rss(const KSpaceData& full) {
    ComplexImage out(full.h, full.w);
    std::vector<double> acc(out.v.size(), 0.0);
    for (int c = 0; c < full.nc; ++c) {
        ComplexImage img = centered_ifft(full.coils[size_t(c)]);
        for (size_t i = 0; i < acc.size(); ++i) acc[i] += std::norm(img.v[i]);
    }
    for (size_t i = 0; i < acc.size(); ++i) out.v[i] = Complex(std::sqrt(acc[i]), 0.0);
    return out;
}

} // namespace cupid
