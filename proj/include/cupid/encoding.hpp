#pragma once

#include <vector>

#include "cupid/coils.hpp"
#include "cupid/image.hpp"
#include "cupid/mask.hpp"

namespace cupid {

// Multi-coil Cartesian k-space in the centered layout (DC at h/2, w/2).
// Entries on unsampled lines are exactly zero.
struct KSpaceData {
    int nc = 0;
    int h = 0;
    int w = 0;
    SamplingMask mask;
    std::vector<ComplexImage> coils;

    KSpaceData() = default;
    KSpaceData(int nc_, int h_, int w_, SamplingMask m)
        : nc(nc_), h(h_), w(w_), mask(std::move(m)), coils(size_t(nc_), ComplexImage(h_, w_)) {}
};

inline double norm2(const KSpaceData& y) {
    double s = 0.0;
    for (const auto& c : y.coils)
        for (const Complex& z : c.v) s += std::norm(z);
    return std::sqrt(s);
}

inline Complex dot(const KSpaceData& a, const KSpaceData& b) {
    Complex s(0, 0);
    for (size_t c = 0; c < a.coils.size(); ++c) s += dot(a.coils[c], b.coils[c]);
    return s;
}

// E_Omega = mask o F o S: coil weighting, orthonormal 2-D Fourier transform,
// and phase-encode line selection. Immutable once constructed.
class EncodingOperator {
public:
    EncodingOperator(CoilSensitivities sens, SamplingMask mask)
        : sens_(std::move(sens)), mask_(std::move(mask)) {
        if (mask_.height() != sens_.h)
            throw DataError("EncodingOperator: mask height " + std::to_string(mask_.height()) +
                            " does not match coil grid " + std::to_string(sens_.h));
    }

    const CoilSensitivities& sensitivities() const { return sens_; }
    const SamplingMask& mask() const { return mask_; }
    int nc() const { return sens_.nc; }
    int h() const { return sens_.h; }
    int w() const { return sens_.w; }

    KSpaceData apply(const ComplexImage& x) const {
        if (x.h != sens_.h || x.w != sens_.w)
            throw DataError("EncodingOperator::apply: image shape [" + std::to_string(x.h) + "x" +
                            std::to_string(x.w) + "] does not match operator grid");
        KSpaceData y(sens_.nc, sens_.h, sens_.w, mask_);
        for (int c = 0; c < sens_.nc; ++c) {
            ComplexImage weighted(x.h, x.w);
            for (size_t i = 0; i < x.v.size(); ++i) weighted.v[i] = sens_.maps[size_t(c)].v[i] * x.v[i];
            ComplexImage k = centered_fft(weighted);
            for (int r = 0; r < k.h; ++r) {
                if (!mask_.line(r)) {
                    for (int q = 0; q < k.w; ++q) k.at(r, q) = Complex(0, 0);
                }
            }
            y.coils[size_t(c)] = std::move(k);
        }
        return y;
    }

    ComplexImage adjoint(const KSpaceData& y) const {
        if (y.nc != sens_.nc || y.h != sens_.h || y.w != sens_.w)
            throw DataError("EncodingOperator::adjoint: k-space shape does not match operator");
        ComplexImage out(sens_.h, sens_.w);
        for (int c = 0; c < sens_.nc; ++c) {
            ComplexImage k = y.coils[size_t(c)];
            for (int r = 0; r < k.h; ++r) {
                if (!mask_.line(r)) {
                    for (int q = 0; q < k.w; ++q) k.at(r, q) = Complex(0, 0);
                }
            }
            ComplexImage img = centered_ifft(k);
            for (size_t i = 0; i < out.v.size(); ++i)
                out.v[i] += std::conj(sens_.maps[size_t(c)].v[i]) * img.v[i];
        }
        return out;
    }

    ComplexImage normal(const ComplexImage& x) const { return adjoint(apply(x)); }

    // E^H E x_PI: the stand-in for E^H y wherever data-fidelity blocks need a
    // right-hand side, formed from the reconstructed image alone.
    ComplexImage rhs_from_image(const ComplexImage& x_pi) const { return normal(x_pi); }

private:
    CoilSensitivities sens_;
    SamplingMask mask_;
};

} // namespace cupid
