#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "cupid/image.hpp"

namespace cupid {

namespace detail {

// --- small dense solver used by the filter refinement ---------------------

inline std::vector<double> solve_gauss(std::vector<double> A, std::vector<double> b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(A[size_t(r) * n + col]) > std::abs(A[size_t(piv) * n + col])) piv = r;
        for (int c = 0; c < n; ++c) std::swap(A[size_t(col) * n + c], A[size_t(piv) * n + c]);
        std::swap(b[size_t(col)], b[size_t(piv)]);
        const double d = A[size_t(col) * n + col];
        for (int r = col + 1; r < n; ++r) {
            const double f = A[size_t(r) * n + col] / d;
            for (int c = col; c < n; ++c) A[size_t(r) * n + c] -= f * A[size_t(col) * n + c];
            b[size_t(r)] -= f * b[size_t(col)];
        }
    }
    std::vector<double> x(size_t(n), 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[size_t(r)];
        for (int c = r + 1; c < n; ++c) s -= A[size_t(r) * n + c] * x[size_t(c)];
        x[size_t(r)] = s / A[size_t(r) * n + r];
    }
    return x;
}

// Minimum-change Newton projection onto a constraint manifold:
// v <- v - J^T (J J^T)^{-1} c(v). The published filter tables carry 7-8
// decimals; this polishes them until the perfect-reconstruction identities
// hold to machine precision.
template <typename ConstraintFn>
inline void refine_on_manifold(std::vector<double>& v, int n_con, const ConstraintFn& cons) {
    const int n = int(v.size());
    for (int pass = 0; pass < 200; ++pass) {
        std::vector<double> c = cons(v);
        double cmax = 0.0;
        for (double ci : c) cmax = std::max(cmax, std::abs(ci));
        if (cmax < 1e-14) return;
        // numeric Jacobian
        std::vector<double> J(size_t(n_con) * n);
        const double step = 1e-7;
        for (int j = 0; j < n; ++j) {
            std::vector<double> vp = v, vm = v;
            vp[size_t(j)] += step;
            vm[size_t(j)] -= step;
            std::vector<double> cp = cons(vp), cm = cons(vm);
            for (int i = 0; i < n_con; ++i)
                J[size_t(i) * n + j] = (cp[size_t(i)] - cm[size_t(i)]) / (2 * step);
        }
        std::vector<double> JJt(size_t(n_con) * n_con, 0.0);
        for (int i = 0; i < n_con; ++i)
            for (int k = 0; k < n_con; ++k) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += J[size_t(i) * n + j] * J[size_t(k) * n + j];
                JJt[size_t(i) * n_con + k] = s;
            }
        std::vector<double> lam = solve_gauss(JJt, c, n_con);
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int i = 0; i < n_con; ++i) s += J[size_t(i) * n + j] * lam[size_t(i)];
            v[size_t(j)] -= s;
        }
    }
}

} // namespace detail

// Dual-tree filter banks: Kingsbury near-symmetric 13/19-tap pair for the
// first level and the 14-tap quarter-shift orthonormal filters for deeper
// levels. Analysis filters are stored; level-1 synthesis filters follow from
// the modulation relations, deeper-level synthesis is the stage adjoint.
struct DtcwtFilters {
    // level 1, odd length, symmetric, center = len/2
    std::vector<double> h0o, h1o, g0o, g1o;
    // quarter-shift, length 14; tree b is the time reverse of tree a
    std::vector<double> h0a, h1a, h0b, h1b;
};

inline const DtcwtFilters& dtcwt_filters() {
    static const DtcwtFilters f = [] {
        // near-symmetric (13,19) pair; unique taps from center outwards
        std::vector<double> u0 = {0.55546875, 0.296875, -0.0482421875, -0.046875,
                                  0.0222656250, 0.0, -0.0017578125};
        std::vector<double> u1 = {0.5594308,  -0.2997576, -0.0516881, 0.0556431,
                                  0.0238560,  -0.0071568, -0.0018834, 0.0013419,
                                  0.0,        -0.0000706};
        std::vector<double> v(u0.size() + u1.size());
        std::copy(u0.begin(), u0.end(), v.begin());
        std::copy(u1.begin(), u1.end(), v.begin() + long(u0.size()));

        // PR constraints for the two-phase level-1 bank with g0[n] = (-1)^n h1[n]:
        // conv(h0, g0) must be halfband with center value 1/2, h1 must have a
        // vanishing moment, h0 keeps unit DC gain.
        auto cons = [](const std::vector<double>& w) {
            const int n0 = 7, n1 = 10;
            auto h0 = [&](int k) { return std::abs(k) <= 6 ? w[size_t(std::abs(k))] : 0.0; };
            auto h1 = [&](int k) {
                return std::abs(k) <= 9 ? w[size_t(n0 + std::abs(k))] : 0.0;
            };
            auto g0 = [&](int k) { return (k % 2 == 0 ? 1.0 : -1.0) * h1(k); };
            std::vector<double> c;
            for (int t = 0; t <= 7; ++t) {
                double m = 0.0;
                for (int k = -6; k <= 6; ++k) m += h0(k) * g0(2 * t - k);
                c.push_back(m - (t == 0 ? 0.5 : 0.0));
            }
            double s1 = h1(0), s0 = h0(0);
            for (int k = 1; k <= n1 - 1; ++k) s1 += 2 * h1(k);
            for (int k = 1; k <= n0 - 1; ++k) s0 += 2 * h0(k);
            c.push_back(s1);       // highpass vanishing moment
            c.push_back(s0 - 1.0); // lowpass DC gain
            return c;
        };
        detail::refine_on_manifold(v, 10, cons);

        DtcwtFilters out;
        out.h0o.resize(13);
        out.h1o.resize(19);
        for (int k = -6; k <= 6; ++k) out.h0o[size_t(k + 6)] = v[size_t(std::abs(k))];
        for (int k = -9; k <= 9; ++k) out.h1o[size_t(k + 9)] = v[size_t(7 + std::abs(k))];
        out.g0o.resize(19);
        out.g1o.resize(13);
        for (int k = -9; k <= 9; ++k)
            out.g0o[size_t(k + 9)] = (k % 2 == 0 ? 1.0 : -1.0) * out.h1o[size_t(k + 9)];
        for (int k = -6; k <= 6; ++k)
            out.g1o[size_t(k + 6)] = (k % 2 == 0 ? 1.0 : -1.0) * out.h0o[size_t(k + 6)];

        // quarter-shift 14-tap orthonormal lowpass (tree a)
        std::vector<double> q = {0.00325314, -0.00388321, 0.03466035, -0.03887280,
                                 -0.11720389, 0.27529538,  0.75614564, 0.56881042,
                                 0.01186609, -0.10671180,  0.02382538, 0.01702522,
                                 -0.00543948, -0.00455690};
        auto qcons = [](const std::vector<double>& h) {
            const int L = int(h.size());
            std::vector<double> c;
            for (int t = 0; t < 7; ++t) {
                double s = 0.0;
                for (int n = 2 * t; n < L; ++n) s += h[size_t(n)] * h[size_t(n - 2 * t)];
                c.push_back(s - (t == 0 ? 1.0 : 0.0));
            }
            double dc = 0.0, ny = 0.0;
            for (int n = 0; n < L; ++n) {
                dc += h[size_t(n)];
                ny += (n % 2 == 0 ? 1.0 : -1.0) * h[size_t(n)];
            }
            c.push_back(dc - std::sqrt(2.0));
            c.push_back(ny);
            return c;
        };
        detail::refine_on_manifold(q, 9, qcons);

        const int L = int(q.size());
        out.h0a = q;
        out.h0b.resize(size_t(L));
        out.h1a.resize(size_t(L));
        out.h1b.resize(size_t(L));
        for (int n = 0; n < L; ++n) {
            out.h0b[size_t(n)] = q[size_t(L - 1 - n)];
            // alternating flip gives the orthonormal highpass complement
            out.h1a[size_t(n)] = (n % 2 == 0 ? 1.0 : -1.0) * out.h0b[size_t(n)];
            out.h1b[size_t(n)] = (n % 2 == 0 ? 1.0 : -1.0) * out.h0a[size_t(n)];
        }
        return out;
    }();
    return f;
}

namespace detail {

// circular correlation with a centered odd filter, full rate
inline void corr_full(const Complex* x, int n, int xs, const double* f, int len, Complex* out,
                      int os) {
    const int c = len / 2;
    for (int i = 0; i < n; ++i) {
        Complex acc(0, 0);
        for (int j = 0; j < len; ++j) {
            int idx = i + j - c;
            idx %= n;
            if (idx < 0) idx += n;
            acc += f[j] * x[idx * xs];
        }
        out[i * os] = acc;
    }
}

// circular synthesis convolution accumulate: out[m] += sum_j f[j] u[(m - j + c) mod n]
inline void conv_full_acc(const Complex* u, int n, int us, const double* f, int len, Complex* out,
                          int os) {
    const int c = len / 2;
    for (int m = 0; m < n; ++m) {
        Complex acc(0, 0);
        for (int j = 0; j < len; ++j) {
            int idx = m - j + c;
            idx %= n;
            if (idx < 0) idx += n;
            acc += f[j] * u[idx * us];
        }
        out[m * os] += acc;
    }
}

// decimate-by-2 correlation: out[k] = sum_j f[j] x[(2k + j - off) mod n]
inline void corr_dec2(const Complex* x, int n, int xs, const double* f, int len, int off,
                      Complex* out, int os) {
    for (int k = 0; k < n / 2; ++k) {
        Complex acc(0, 0);
        for (int j = 0; j < len; ++j) {
            int idx = 2 * k + j - off;
            idx %= n;
            if (idx < 0) idx += n;
            acc += f[j] * x[idx * xs];
        }
        out[k * os] = acc;
    }
}

// adjoint of corr_dec2 (scatter); this is also the synthesis step for the
// orthonormal quarter-shift stages
inline void corr_dec2_adj(Complex* xbar, int n, int xs, const double* f, int len, int off,
                          const Complex* vbar, int vs) {
    for (int k = 0; k < n / 2; ++k) {
        const Complex v = vbar[k * vs];
        for (int j = 0; j < len; ++j) {
            int idx = 2 * k + j - off;
            idx %= n;
            if (idx < 0) idx += n;
            xbar[idx * xs] += f[j] * v;
        }
    }
}

} // namespace detail

// Over-complete dual-tree complex wavelet transform on complex images.
// Implemented as four separable wavelet trees (level 1: the two polyphases of
// the full-rate near-symmetric bank; deeper levels: quarter-shift filters)
// whose subbands are recombined by a unitary matrix into four directional
// complex subbands per orientation. The transform is complex-linear;
// convolutions are circular, so reconstruction is exact.
class Dtcwt {
public:
    Dtcwt(int h, int w, int levels = 3, bool allow_padding = true)
        : h_(h), w_(w), levels_(levels) {
        if (levels < 1) throw DataError("dtcwt: levels must be >= 1");
        const int div = 1 << levels;
        ph_ = ((h + div - 1) / div) * div;
        pw_ = ((w + div - 1) / div) * div;
        if (ph_ - h >= h || pw_ - w >= w)
            throw DataError("dtcwt: image too small for " + std::to_string(levels) + " levels");
        if ((ph_ != h || pw_ != w) && !allow_padding)
            throw DataError("dtcwt: image " + std::to_string(h) + "x" + std::to_string(w) +
                            " not divisible by 2^" + std::to_string(levels) +
                            " and padding is disabled");
        count_ = 0;
        for (int l = 1; l <= levels_; ++l) count_ += 12 * size_t((ph_ >> l)) * size_t((pw_ >> l));
        count_ += 4 * size_t(ph_ >> levels_) * size_t(pw_ >> levels_);
    }

    int levels() const { return levels_; }
    size_t coeff_count() const { return count_; } // complex coefficients

    std::vector<Complex> forward(const ComplexImage& x) const {
        if (x.h != h_ || x.w != w_) throw DataError("dtcwt: image shape does not match transform");
        std::array<ComplexImage, 4> low;
        std::vector<Complex> out;
        out.reserve(count_);

        // level 1: full-rate filtering, then the 2x2 polyphase split assigns
        // the four trees (even phase = tree a on each axis)
        {
            ComplexImage xp = pad_(x);
            ComplexImage lo = filt_cols_full_(xp, dtcwt_filters().h0o);
            ComplexImage hi = filt_cols_full_(xp, dtcwt_filters().h1o);
            ComplexImage ll = filt_rows_full_(lo, dtcwt_filters().h0o);
            ComplexImage lh = filt_rows_full_(lo, dtcwt_filters().h1o);
            ComplexImage hl = filt_rows_full_(hi, dtcwt_filters().h0o);
            ComplexImage hh = filt_rows_full_(hi, dtcwt_filters().h1o);
            for (int t = 0; t < 4; ++t) low[size_t(t)] = phase_pick_(ll, t / 2, t % 2);
            emit_level_(lh, hl, hh, out);
        }
        for (int l = 2; l <= levels_; ++l) {
            std::array<ComplexImage, 4> sub_lh, sub_hl, sub_hh;
            for (int t = 0; t < 4; ++t) {
                const int ct = t / 2, rt = t % 2;
                const auto& f = dtcwt_filters();
                const auto& c0 = ct == 0 ? f.h0a : f.h0b;
                const auto& c1 = ct == 0 ? f.h1a : f.h1b;
                const auto& r0 = rt == 0 ? f.h0a : f.h0b;
                const auto& r1 = rt == 0 ? f.h1a : f.h1b;
                ComplexImage lo = filt_cols_dec2_(low[size_t(t)], c0);
                ComplexImage hi = filt_cols_dec2_(low[size_t(t)], c1);
                low[size_t(t)] = filt_rows_dec2_(lo, r0);
                sub_lh[size_t(t)] = filt_rows_dec2_(lo, r1);
                sub_hl[size_t(t)] = filt_rows_dec2_(hi, r0);
                sub_hh[size_t(t)] = filt_rows_dec2_(hi, r1);
            }
            emit_level_trees_(sub_lh, sub_hl, sub_hh, out);
        }
        for (int t = 0; t < 4; ++t)
            out.insert(out.end(), low[size_t(t)].v.begin(), low[size_t(t)].v.end());
        return out;
    }

    // Exact inverse: unitary recombination back to tree subbands, adjoint
    // synthesis for the orthonormal stages, dual-filter synthesis (averaged
    // over the two polyphases) for level 1.
    ComplexImage inverse(const std::vector<Complex>& coeffs) const {
        return reconstruct_(coeffs, /*adjoint_level1=*/false);
    }

    // Exact adjoint of forward (equals the inverse except at level 1, where
    // the bank is biorthogonal rather than orthonormal).
    ComplexImage adjoint(const std::vector<Complex>& coeffs) const {
        return reconstruct_(coeffs, /*adjoint_level1=*/true);
    }

private:
    int h_, w_, levels_, ph_, pw_;
    size_t count_;
    static constexpr int qoff_ = 7; // sampling offset of the quarter-shift stages

    ComplexImage pad_(const ComplexImage& x) const {
        if (ph_ == h_ && pw_ == w_) return x;
        ComplexImage p(ph_, pw_);
        for (int r = 0; r < ph_; ++r) {
            const int rr = r < h_ ? r : 2 * h_ - 1 - r; // reflect bottom rows
            for (int c = 0; c < pw_; ++c) {
                const int cc = c < w_ ? c : 2 * w_ - 1 - c;
                p.at(r, c) = x.at(rr, cc);
            }
        }
        return p;
    }

    ComplexImage crop_add_(const ComplexImage& p, bool adjoint_fold) const {
        if (ph_ == h_ && pw_ == w_) return p;
        ComplexImage x(h_, w_);
        if (adjoint_fold) {
            for (int r = 0; r < ph_; ++r) {
                const int rr = r < h_ ? r : 2 * h_ - 1 - r;
                for (int c = 0; c < pw_; ++c) {
                    const int cc = c < w_ ? c : 2 * w_ - 1 - c;
                    x.at(rr, cc) += p.at(r, c);
                }
            }
        } else {
            for (int r = 0; r < h_; ++r)
                for (int c = 0; c < w_; ++c) x.at(r, c) = p.at(r, c);
        }
        return x;
    }

    static ComplexImage filt_cols_full_(const ComplexImage& x, const std::vector<double>& f) {
        ComplexImage y(x.h, x.w);
        for (int c = 0; c < x.w; ++c)
            detail::corr_full(x.v.data() + c, x.h, x.w, f.data(), int(f.size()), y.v.data() + c,
                              y.w);
        return y;
    }

    static ComplexImage filt_rows_full_(const ComplexImage& x, const std::vector<double>& f) {
        ComplexImage y(x.h, x.w);
        for (int r = 0; r < x.h; ++r)
            detail::corr_full(x.v.data() + size_t(r) * x.w, x.w, 1, f.data(), int(f.size()),
                              y.v.data() + size_t(r) * y.w, 1);
        return y;
    }

    static ComplexImage filt_cols_dec2_(const ComplexImage& x, const std::vector<double>& f) {
        ComplexImage y(x.h / 2, x.w);
        for (int c = 0; c < x.w; ++c)
            detail::corr_dec2(x.v.data() + c, x.h, x.w, f.data(), int(f.size()), qoff_,
                              y.v.data() + c, y.w);
        return y;
    }

    static ComplexImage filt_rows_dec2_(const ComplexImage& x, const std::vector<double>& f) {
        ComplexImage y(x.h, x.w / 2);
        for (int r = 0; r < x.h; ++r)
            detail::corr_dec2(x.v.data() + size_t(r) * x.w, x.w, 1, f.data(), int(f.size()), qoff_,
                              y.v.data() + size_t(r) * y.w, 1);
        return y;
    }

    static ComplexImage phase_pick_(const ComplexImage& x, int pr, int pc) {
        ComplexImage y(x.h / 2, x.w / 2);
        for (int r = 0; r < y.h; ++r)
            for (int c = 0; c < y.w; ++c) y.at(r, c) = x.at(2 * r + pr, 2 * c + pc);
        return y;
    }

    static void phase_put_acc_(ComplexImage& x, const ComplexImage& y, int pr, int pc) {
        for (int r = 0; r < y.h; ++r)
            for (int c = 0; c < y.w; ++c) x.at(2 * r + pr, 2 * c + pc) += y.at(r, c);
    }

    // unitary quad -> four directional complex subbands (and back via the
    // conjugate transpose); input order (aa, ab, ba, bb), scale 1/2
    static void q2c_(const std::array<Complex, 4>& u, std::array<Complex, 4>& z) {
        const Complex i(0, 1);
        z[0] = 0.5 * ((u[0] - u[3]) + i * (u[1] + u[2]));
        z[1] = 0.5 * ((u[0] + u[3]) + i * (u[2] - u[1]));
        z[2] = 0.5 * ((u[0] - u[3]) - i * (u[1] + u[2]));
        z[3] = 0.5 * ((u[0] + u[3]) - i * (u[2] - u[1]));
    }

    static void c2q_(const std::array<Complex, 4>& z, std::array<Complex, 4>& u) {
        const Complex i(0, 1);
        u[0] = 0.5 * (z[0] + z[1] + z[2] + z[3]);
        u[1] = 0.5 * (-i * z[0] + i * z[1] + i * z[2] - i * z[3]);
        u[2] = 0.5 * (-i * z[0] - i * z[1] + i * z[2] + i * z[3]);
        u[3] = 0.5 * (-z[0] + z[1] - z[2] + z[3]);
    }

    // level 1: subbands arrive full rate; polyphase picks the trees
    void emit_level_(const ComplexImage& lh, const ComplexImage& hl, const ComplexImage& hh,
                     std::vector<Complex>& out) const {
        std::array<ComplexImage, 4> tlh, thl, thh;
        for (int t = 0; t < 4; ++t) {
            tlh[size_t(t)] = phase_pick_(lh, t / 2, t % 2);
            thl[size_t(t)] = phase_pick_(hl, t / 2, t % 2);
            thh[size_t(t)] = phase_pick_(hh, t / 2, t % 2);
        }
        emit_level_trees_(tlh, thl, thh, out);
    }

    void emit_level_trees_(const std::array<ComplexImage, 4>& lh,
                           const std::array<ComplexImage, 4>& hl,
                           const std::array<ComplexImage, 4>& hh,
                           std::vector<Complex>& out) const {
        for (const auto* band : {&lh, &hl, &hh}) {
            const size_t n = (*band)[0].v.size();
            const size_t base = out.size();
            out.resize(base + 4 * n);
            for (size_t i = 0; i < n; ++i) {
                std::array<Complex, 4> u = {(*band)[0].v[i], (*band)[1].v[i], (*band)[2].v[i],
                                            (*band)[3].v[i]};
                std::array<Complex, 4> z;
                q2c_(u, z);
                for (int k = 0; k < 4; ++k) out[base + size_t(k) * n + i] = z[size_t(k)];
            }
        }
    }

    void read_level_trees_(const std::vector<Complex>& coeffs, size_t& pos, int hl_, int wl_,
                           std::array<ComplexImage, 4>& lh, std::array<ComplexImage, 4>& hl,
                           std::array<ComplexImage, 4>& hh) const {
        for (auto* band : {&lh, &hl, &hh}) {
            const size_t n = size_t(hl_) * size_t(wl_);
            for (int t = 0; t < 4; ++t) (*band)[size_t(t)] = ComplexImage(hl_, wl_);
            for (size_t i = 0; i < n; ++i) {
                std::array<Complex, 4> z = {coeffs[pos + i], coeffs[pos + n + i],
                                            coeffs[pos + 2 * n + i], coeffs[pos + 3 * n + i]};
                std::array<Complex, 4> u;
                c2q_(z, u);
                for (int t = 0; t < 4; ++t) (*band)[size_t(t)].v[i] = u[size_t(t)];
            }
            pos += 4 * n;
        }
    }

    ComplexImage reconstruct_(const std::vector<Complex>& coeffs, bool adjoint_level1) const {
        if (coeffs.size() != count_)
            throw DataError("dtcwt: coefficient vector has wrong length " +
                            std::to_string(coeffs.size()) + " (expected " +
                            std::to_string(count_) + ")");
        // gather per-level tree subbands
        std::vector<std::array<std::array<ComplexImage, 4>, 3>> levels;
        levels.resize(size_t(levels_));
        size_t pos = 0;
        for (int l = 1; l <= levels_; ++l) {
            auto& lv = levels[size_t(l - 1)];
            read_level_trees_(coeffs, pos, ph_ >> l, pw_ >> l, lv[0], lv[1], lv[2]);
        }
        std::array<ComplexImage, 4> low;
        const int lh_n = ph_ >> levels_, lw_n = pw_ >> levels_;
        for (int t = 0; t < 4; ++t) {
            low[size_t(t)] = ComplexImage(lh_n, lw_n);
            std::copy(coeffs.begin() + long(pos), coeffs.begin() + long(pos) + long(low[0].v.size()),
                      low[size_t(t)].v.begin());
            pos += low[0].v.size();
        }

        // quarter-shift stages: synthesis is the stage adjoint
        for (int l = levels_; l >= 2; --l) {
            const auto& lv = levels[size_t(l - 1)];
            for (int t = 0; t < 4; ++t) {
                const int ct = t / 2, rt = t % 2;
                const auto& f = dtcwt_filters();
                const auto& c0 = ct == 0 ? f.h0a : f.h0b;
                const auto& c1 = ct == 0 ? f.h1a : f.h1b;
                const auto& r0 = rt == 0 ? f.h0a : f.h0b;
                const auto& r1 = rt == 0 ? f.h1a : f.h1b;
                const int hh2 = ph_ >> (l - 1), ww2 = pw_ >> (l - 1);
                // rows first (undo the second analysis pass)
                ComplexImage lo(hh2 / 2, ww2), hi(hh2 / 2, ww2);
                rows_dec2_adj_(lo, low[size_t(t)], r0);
                rows_dec2_adj_(lo, lv[0][size_t(t)], r1);
                rows_dec2_adj_(hi, lv[1][size_t(t)], r0);
                rows_dec2_adj_(hi, lv[2][size_t(t)], r1);
                ComplexImage up(hh2, ww2);
                cols_dec2_adj_(up, lo, c0);
                cols_dec2_adj_(up, hi, c1);
                low[size_t(t)] = std::move(up);
            }
        }

        // level 1: re-interleave polyphases to full rate, then either the
        // biorthogonal synthesis filters (inverse) or the analysis adjoint
        const auto& lv1 = levels[0];
        ComplexImage ll(ph_, pw_), lh(ph_, pw_), hl(ph_, pw_), hh(ph_, pw_);
        for (int t = 0; t < 4; ++t) {
            phase_put_acc_(ll, low[size_t(t)], t / 2, t % 2);
            phase_put_acc_(lh, lv1[0][size_t(t)], t / 2, t % 2);
            phase_put_acc_(hl, lv1[1][size_t(t)], t / 2, t % 2);
            phase_put_acc_(hh, lv1[2][size_t(t)], t / 2, t % 2);
        }
        const auto& f = dtcwt_filters();
        const auto& s0 = adjoint_level1 ? f.h0o : f.g0o;
        const auto& s1 = adjoint_level1 ? f.h1o : f.g1o;
        ComplexImage lo(ph_, pw_), hi(ph_, pw_);
        rows_full_syn_(lo, ll, s0);
        rows_full_syn_(lo, lh, s1);
        rows_full_syn_(hi, hl, s0);
        rows_full_syn_(hi, hh, s1);
        ComplexImage xp(ph_, pw_);
        cols_full_syn_(xp, lo, s0);
        cols_full_syn_(xp, hi, s1);
        return crop_add_(xp, adjoint_level1);
    }

    static void rows_dec2_adj_(ComplexImage& acc, const ComplexImage& v,
                               const std::vector<double>& f) {
        for (int r = 0; r < acc.h; ++r)
            detail::corr_dec2_adj(acc.v.data() + size_t(r) * acc.w, acc.w, 1, f.data(),
                                  int(f.size()), qoff_, v.v.data() + size_t(r) * v.w, 1);
    }

    static void cols_dec2_adj_(ComplexImage& acc, const ComplexImage& v,
                               const std::vector<double>& f) {
        for (int c = 0; c < acc.w; ++c)
            detail::corr_dec2_adj(acc.v.data() + c, acc.h, acc.w, f.data(), int(f.size()), qoff_,
                                  v.v.data() + c, v.w);
    }

    // full-rate synthesis along rows; both inverse and adjoint are circular
    // convolutions with the centered filter
    static void rows_full_syn_(ComplexImage& acc, const ComplexImage& u,
                               const std::vector<double>& f) {
        for (int r = 0; r < acc.h; ++r)
            detail::conv_full_acc(u.v.data() + size_t(r) * u.w, u.w, 1, f.data(), int(f.size()),
                                  acc.v.data() + size_t(r) * acc.w, 1);
    }

    static void cols_full_syn_(ComplexImage& acc, const ComplexImage& u,
                               const std::vector<double>& f) {
        for (int c = 0; c < acc.w; ++c)
            detail::conv_full_acc(u.v.data() + c, u.h, u.w, f.data(), int(f.size()),
                                  acc.v.data() + c, acc.w);
    }
};

} // namespace cupid
