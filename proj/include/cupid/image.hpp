#pragma once

#include <cmath>
#include <vector>

#include "cupid/common.hpp"
#include "cupid/fft.hpp"
#include "cupid/tensor.hpp"

namespace cupid {

// 2-D complex field: images, perturbations, auxiliary variables.
struct ComplexImage {
    int h = 0;
    int w = 0;
    std::vector<Complex> v;

    ComplexImage() = default;
    ComplexImage(int h_, int w_) : h(h_), w(w_), v(size_t(h_) * size_t(w_), Complex(0, 0)) {}

    Complex& at(int r, int c) { return v[size_t(r) * w + c]; }
    Complex at(int r, int c) const { return v[size_t(r) * w + c]; }
    size_t size() const { return v.size(); }
    bool same_shape(const ComplexImage& o) const { return h == o.h && w == o.w; }
};

inline void check_same_shape(const ComplexImage& a, const ComplexImage& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DataError(std::string(op) + ": shape mismatch [" + std::to_string(a.h) + "x" +
                        std::to_string(a.w) + "] vs [" + std::to_string(b.h) + "x" +
                        std::to_string(b.w) + "]");
    }
}

inline Complex dot(const ComplexImage& a, const ComplexImage& b) {
    check_same_shape(a, b, "dot");
    Complex s(0, 0);
    for (size_t i = 0; i < a.v.size(); ++i) s += std::conj(a.v[i]) * b.v[i];
    return s;
}

inline double norm2(const ComplexImage& a) {
    double s = 0.0;
    for (const Complex& z : a.v) s += std::norm(z);
    return std::sqrt(s);
}

inline double max_abs(const ComplexImage& a) {
    double m = 0.0;
    for (const Complex& z : a.v) m = std::max(m, std::abs(z));
    return m;
}

inline ComplexImage operator+(const ComplexImage& a, const ComplexImage& b) {
    check_same_shape(a, b, "add");
    ComplexImage r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] += b.v[i];
    return r;
}

inline ComplexImage operator-(const ComplexImage& a, const ComplexImage& b) {
    check_same_shape(a, b, "sub");
    ComplexImage r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= b.v[i];
    return r;
}

inline ComplexImage operator*(Complex s, const ComplexImage& a) {
    ComplexImage r = a;
    for (Complex& z : r.v) z *= s;
    return r;
}

inline void axpy(Complex alpha, const ComplexImage& x, ComplexImage& y) {
    check_same_shape(x, y, "axpy");
    for (size_t i = 0; i < x.v.size(); ++i) y.v[i] += alpha * x.v[i];
}

inline double rel_err(const ComplexImage& got, const ComplexImage& want) {
    ComplexImage d = got - want;
    const double denom = norm2(want);
    return denom > 0 ? norm2(d) / denom : norm2(d);
}

inline bool all_finite(const ComplexImage& a) {
    for (const Complex& z : a.v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

// Orthonormal centered 2-D FFT: DC ends up at (h/2, w/2).
inline ComplexImage centered_fft(const ComplexImage& x) {
    ComplexImage k = x;
    fft2(k.v.data(), size_t(k.h), size_t(k.w), false);
    fftshift2(k.v.data(), size_t(k.h), size_t(k.w), false);
    return k;
}

inline ComplexImage centered_ifft(const ComplexImage& k) {
    ComplexImage x = k;
    fftshift2(x.v.data(), size_t(x.h), size_t(x.w), true);
    fft2(x.v.data(), size_t(x.h), size_t(x.w), true);
    return x;
}

// Paired-channel tensor [2,h,w] <-> complex image conversions.
inline Tensor to_tensor(const ComplexImage& x) {
    Tensor t({2, x.h, x.w});
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) {
        t.data[i] = x.v[i].real();
        t.data[n + i] = x.v[i].imag();
    }
    return t;
}

inline ComplexImage to_image(const Tensor& t) {
    if (t.shape.size() != 3 || t.shape[0] != 2)
        throw DataError("to_image: expected [2,H,W] tensor, got " + t.shape_str());
    ComplexImage x(int(t.shape[1]), int(t.shape[2]));
    const size_t n = x.size();
    for (size_t i = 0; i < n; ++i) x.v[i] = Complex(t.data[i], t.data[n + i]);
    return x;
}

} // namespace cupid
