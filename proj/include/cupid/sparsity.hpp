#pragma once

#include <vector>

#include "cupid/cg.hpp"
#include "cupid/dtcwt.hpp"

namespace cupid {

// Complex soft threshold: c -> c * max(|c| - tau, 0) / |c|, exactly zero at
// the origin (proximal operator of tau * l1 on magnitudes).
inline void soft_threshold(std::vector<Complex>& coeffs, double tau) {
    if (tau < 0.0) throw DataError("soft_threshold: tau must be non-negative");
    if (tau == 0.0) return;
    for (Complex& c : coeffs) {
        const double mag = std::abs(c);
        c = mag <= tau ? Complex(0, 0) : c * ((mag - tau) / mag);
    }
}

inline double linf(const std::vector<Complex>& coeffs) {
    double m = 0.0;
    for (const Complex& c : coeffs) m = std::max(m, std::abs(c));
    return m;
}

inline double l1(const std::vector<Complex>& coeffs) {
    double s = 0.0;
    for (const Complex& c : coeffs) s += std::abs(c);
    return s;
}

struct CsConfig {
    int outer_iters = 10;
    int cg_steps = 10;
    double threshold_scale = 0.01; // tau = scale * ||W x_PI||_inf
    double mu = 0.05;              // quadratic-penalty weight of the splitting
    int wavelet_levels = 3;

    void validate() const {
        if (outer_iters < 1 || cg_steps < 1 || threshold_scale < 0.0 || mu <= 0.0 ||
            wavelet_levels < 1)
            throw DataError("CsConfig: all fields must be positive");
    }
};

struct CsResult {
    ComplexImage image;
    std::vector<double> objective; // surrogate value per outer iteration
    double tau = 0.0;
};

namespace detail {

// 0.5||Ex - y||^2 + tau||Wx||_1 up to the constant 0.5||y||^2, evaluated
// through rhs = E^H y so it works without raw data.
inline double cs_objective(const ComplexImage& x, const ComplexImage& rhs,
                           const EncodingOperator& enc, const Dtcwt& wt, double tau) {
    ComplexImage ex = enc.normal(x);
    const double quad = 0.5 * std::real(dot(x, ex)) - std::real(dot(rhs, x));
    return quad + tau * l1(wt.forward(x));
}

} // namespace detail

// Wavelet-regularized reconstruction by variable splitting with a quadratic
// penalty: alternate soft-thresholded denoising in the transform domain with
// a CG data-fidelity solve. rhs is E^H y, or rhs_from_image(x_PI) when only
// the parallel-imaging image is available.
inline CsResult cs_reconstruct_rhs(const ComplexImage& x_init, const ComplexImage& rhs,
                                   const EncodingOperator& enc, const CsConfig& cfg = {}) {
    cfg.validate();
    Dtcwt wt(x_init.h, x_init.w, cfg.wavelet_levels);
    const double tau = cfg.threshold_scale * linf(wt.forward(x_init));
    CgConfig cg{cfg.cg_steps, 1e-6};

    CsResult res;
    res.tau = tau;
    ComplexImage x = x_init;
    for (int it = 0; it < cfg.outer_iters; ++it) {
        std::vector<Complex> coeffs = wt.forward(x);
        soft_threshold(coeffs, tau);
        ComplexImage z = wt.inverse(coeffs);
        x = df_solve(z, rhs, enc, cfg.mu, cg);
        res.objective.push_back(detail::cs_objective(x, rhs, enc, wt, tau * cfg.mu));
    }
    if (!all_finite(x)) throw NumericError("cs_reconstruct: non-finite iterate");
    res.image = std::move(x);
    return res;
}

inline ComplexImage cs_reconstruct(const ComplexImage& x_pi, const EncodingOperator& enc,
                                   const CsConfig& cfg = {}) {
    return cs_reconstruct_rhs(x_pi, enc.rhs_from_image(x_pi), enc, cfg).image;
}

inline ComplexImage cs_reconstruct(const KSpaceData& y, const EncodingOperator& enc,
                                   const ComplexImage& x_init, const CsConfig& cfg = {}) {
    return cs_reconstruct_rhs(x_init, enc.adjoint(y), enc, cfg).image;
}

// Strongly regularized reconstruction used as the initial reweighting
// estimate: same solver with a 10x threshold, ending on the proximal shrink
// so the estimate is genuinely sparse in the transform domain (the
// reweighting denominators must vanish where the signal has no support).
inline ComplexImage reweight_init(const ComplexImage& x_pi, const EncodingOperator& enc,
                                  CsConfig cfg = {}) {
    cfg.threshold_scale *= 10.0;
    CsResult res = cs_reconstruct_rhs(x_pi, enc.rhs_from_image(x_pi), enc, cfg);
    Dtcwt wt(x_pi.h, x_pi.w, cfg.wavelet_levels);
    std::vector<Complex> coeffs = wt.forward(res.image);
    soft_threshold(coeffs, res.tau);
    return wt.inverse(coeffs);
}

} // namespace cupid
