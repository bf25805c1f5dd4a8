#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "cupid/common.hpp"

namespace cupid {
namespace detail {

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Cached per-size plan: bit-reversal permutation plus forward twiddles laid
// out stage by stage. Plans live in a thread-local map so concurrent
// transforms on different threads never share mutable state.
struct FftPlan {
    std::vector<uint32_t> bitrev;
    std::vector<Complex> twiddle; // forward (sign -1), conjugate for inverse
};

inline const FftPlan& fft_plan(size_t n) {
    thread_local std::unordered_map<size_t, FftPlan> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    FftPlan plan;
    plan.bitrev.resize(n);
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        plan.bitrev[i] = uint32_t(j);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * pi / double(len);
        for (size_t k = 0; k < len / 2; ++k)
            plan.twiddle.push_back(Complex(std::cos(ang * double(k)), std::sin(ang * double(k))));
    }
    return cache.emplace(n, std::move(plan)).first->second;
}

// In-place iterative radix-2 Cooley-Tukey, unnormalized. sign = -1 forward.
inline void fft_pow2(Complex* a, size_t n, int sign) {
    const FftPlan& plan = fft_plan(n);
    for (size_t i = 1; i < n; ++i) {
        const size_t j = plan.bitrev[i];
        if (i < j) std::swap(a[i], a[j]);
    }
    const Complex* tw = plan.twiddle.data();
    for (size_t len = 2; len <= n; len <<= 1) {
        const size_t half = len / 2;
        for (size_t i = 0; i < n; i += len) {
            for (size_t k = 0; k < half; ++k) {
                const Complex w = sign < 0 ? tw[k] : std::conj(tw[k]);
                const Complex u = a[i + k];
                const Complex v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
        tw += half;
    }
}

// Bluestein chirp-z for arbitrary n, unnormalized.
inline void fft_bluestein(Complex* a, size_t n, int sign) {
    const size_t m = next_pow2(2 * n - 1);
    std::vector<Complex> w(n), fa(m, Complex(0, 0)), fb(m, Complex(0, 0));
    for (size_t i = 0; i < n; ++i) {
        // chirp exp(sign * -i*pi*k^2/n); use k^2 mod 2n to avoid precision loss
        const size_t k2 = (size_t)(((unsigned long long)i * i) % (2 * n));
        const double ang = sign * pi * double(k2) / double(n);
        w[i] = Complex(std::cos(ang), std::sin(ang));
    }
    for (size_t i = 0; i < n; ++i) fa[i] = a[i] * w[i];
    fb[0] = std::conj(w[0]);
    for (size_t i = 1; i < n; ++i) fb[i] = fb[m - i] = std::conj(w[i]);
    fft_pow2(fa.data(), m, -1);
    fft_pow2(fb.data(), m, -1);
    for (size_t i = 0; i < m; ++i) fa[i] *= fb[i];
    fft_pow2(fa.data(), m, +1);
    const double scale = 1.0 / double(m);
    for (size_t i = 0; i < n; ++i) a[i] = fa[i] * w[i] * scale;
}

inline void fft_any(Complex* a, size_t n, int sign) {
    if (n == 1) return;
    if (is_pow2(n))
        fft_pow2(a, n, sign);
    else
        fft_bluestein(a, n, sign);
}

} // namespace detail

// Orthonormal 1-D DFT: X_k = n^{-1/2} sum_j x_j exp(-2*pi*i*jk/n).
inline void fft1(Complex* a, size_t n, bool inverse) {
    detail::fft_any(a, n, inverse ? +1 : -1);
    const double s = 1.0 / std::sqrt(double(n));
    for (size_t i = 0; i < n; ++i) a[i] *= s;
}

// Orthonormal 2-D DFT over a row-major h x w array.
inline void fft2(Complex* a, size_t h, size_t w, bool inverse) {
    std::vector<Complex> col(h);
    for (size_t r = 0; r < h; ++r) fft1(a + r * w, w, inverse);
    for (size_t c = 0; c < w; ++c) {
        for (size_t r = 0; r < h; ++r) col[r] = a[r * w + c];
        fft1(col.data(), h, inverse);
        for (size_t r = 0; r < h; ++r) a[r * w + c] = col[r];
    }
}

// Swap half-spaces so DC moves from index 0 to index n/2 (and back).
inline void fftshift2(Complex* a, size_t h, size_t w, bool inverse_shift) {
    const size_t sh = inverse_shift ? (h - h / 2) : h / 2;
    const size_t sw = inverse_shift ? (w - w / 2) : w / 2;
    std::vector<Complex> tmp(h * w);
    for (size_t r = 0; r < h; ++r)
        for (size_t c = 0; c < w; ++c) tmp[((r + sh) % h) * w + (c + sw) % w] = a[r * w + c];
    std::copy(tmp.begin(), tmp.end(), a);
}

} // namespace cupid
