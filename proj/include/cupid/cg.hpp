#pragma once

#include <functional>
#include <string>

#include "cupid/encoding.hpp"

namespace cupid {

struct CgConfig {
    int max_iter = 15;
    double tol = 1e-6; // relative residual; tol <= 0 runs exactly max_iter steps

    static CgConfig converged() { return CgConfig{300, 1e-10}; }
};

struct CgResult {
    ComplexImage x;
    int iters = 0;
    double rel_residual = 0.0;
    bool converged = false;
    bool plateau = false; // residual stopped improving above tol
};

// Conjugate gradients for a self-adjoint PSD operator A on images.
// Starts from zero by default, so rank-deficient consistent systems land on
// the minimum-norm solution; positive definite solves may pass a warm start.
// An optional per-iteration hook sees each iterate.
inline CgResult cg_solve(const std::function<ComplexImage(const ComplexImage&)>& A,
                         const ComplexImage& b, const CgConfig& cfg,
                         const std::function<void(int, const ComplexImage&)>& on_iterate = {},
                         const ComplexImage* warm_start = nullptr) {
    if (cfg.max_iter < 1) throw DataError("cg_solve: max_iter must be >= 1");
    CgResult res;
    res.x = ComplexImage(b.h, b.w);
    const double bnorm = norm2(b);
    if (bnorm == 0.0 && !warm_start) {
        res.converged = true;
        return res;
    }
    ComplexImage r = b;
    if (warm_start) {
        res.x = *warm_start;
        ComplexImage ax = A(res.x);
        for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= ax.v[i];
        if (bnorm > 0.0 && norm2(r) / bnorm <= cfg.tol && cfg.tol > 0.0) {
            res.converged = true;
            res.rel_residual = norm2(r) / bnorm;
            return res;
        }
    }
    ComplexImage p = r;
    double rs_old = std::real(dot(r, r));
    double best = std::sqrt(rs_old) / bnorm;
    res.rel_residual = best;
    int stall = 0;
    for (int it = 0; it < cfg.max_iter; ++it) {
        ComplexImage Ap = A(p);
        const double pAp = std::real(dot(p, Ap));
        if (!std::isfinite(pAp) || pAp <= 0.0) {
            if (pAp == 0.0) {
                // Krylov space exhausted with residual left: the system is
                // inconsistent in range(A); report the stall
                res.plateau = res.rel_residual > std::max(cfg.tol, 0.0);
                break;
            }
            throw NumericError("cg_solve: non-finite or negative curvature at iteration " +
                               std::to_string(it));
        }
        const double alpha = rs_old / pAp;
        axpy(alpha, p, res.x);
        axpy(-alpha, Ap, r);
        const double rs_new = std::real(dot(r, r));
        if (!std::isfinite(rs_new))
            throw NumericError("cg_solve: NaN residual at iteration " + std::to_string(it));
        res.iters = it + 1;
        res.rel_residual = std::sqrt(rs_new) / bnorm;
        if (on_iterate) on_iterate(it, res.x);
        if (cfg.tol > 0.0 && res.rel_residual <= cfg.tol) {
            res.converged = true;
            return res;
        }
        // track stagnation but keep iterating; CG residuals stall and recover
        if (res.rel_residual > 0.99 * best)
            ++stall;
        else
            stall = 0;
        best = std::min(best, res.rel_residual);
        p = r + ((rs_new / rs_old) * p);
        rs_old = rs_new;
    }
    res.converged = cfg.tol <= 0.0 || res.rel_residual <= cfg.tol;
    // flag an unconverged run whose tail made no headway
    if (!res.converged && stall >= 25) res.plateau = true;
    return res;
}

inline ComplexImage operator*(double s, const ComplexImage& a) { return Complex(s, 0) * a; }

// CG-SENSE: least-squares image from undersampled multi-coil data via the
// normal equations E^H E x = E^H y.
inline CgResult cg_sense_full(const KSpaceData& y, const EncodingOperator& enc,
                              const CgConfig& cfg = {}) {
    ComplexImage b = enc.adjoint(y);
    return cg_solve([&enc](const ComplexImage& v) { return enc.normal(v); }, b, cfg);
}

inline ComplexImage cg_sense(const KSpaceData& y, const EncodingOperator& enc,
                             const CgConfig& cfg = {}) {
    return cg_sense_full(y, enc, cfg).x;
}

// Regularized data-fidelity solve (E^H E + mu I)^{-1} (rhs + mu z).
// rhs is E^H y, or rhs_from_image output when no raw data exists.
inline ComplexImage df_solve(const ComplexImage& z, const ComplexImage& rhs,
                             const EncodingOperator& enc, double mu, const CgConfig& cfg = {}) {
    if (mu <= 0.0) throw DataError("df_solve: mu must be positive");
    check_same_shape(z, rhs, "df_solve");
    ComplexImage b = rhs;
    axpy(Complex(mu, 0), z, b);
    auto A = [&enc, mu](const ComplexImage& v) {
        ComplexImage out = enc.normal(v);
        axpy(Complex(mu, 0), v, out);
        return out;
    };
    // the shifted system is positive definite, so warm-starting from z is safe
    // and pays off when the solve sits inside a near-identity unroll
    CgResult r = cg_solve(A, b, cfg, {}, &z);
    if (!all_finite(r.x))
        throw NumericError("df_solve: non-finite solution (residual " +
                           std::to_string(r.rel_residual) + ")");
    return r.x;
}

// Adjoint Jacobian of z -> (E^H E + mu I)^{-1}(E^H y + mu z): maps a cotangent
// to mu (E^H E + mu I)^{-1} cotangent. Gradients flow through data-fidelity
// blocks with one extra CG solve instead of an unrolled CG graph.
inline ComplexImage cg_fidelity_jvp(const EncodingOperator& enc, double mu,
                                    const ComplexImage& cotangent, const CgConfig& cfg = {}) {
    if (mu <= 0.0) throw DataError("cg_fidelity_jvp: mu must be positive");
    auto A = [&enc, mu](const ComplexImage& v) {
        ComplexImage out = enc.normal(v);
        axpy(Complex(mu, 0), v, out);
        return out;
    };
    CgResult r = cg_solve(A, cotangent, cfg);
    if (!r.converged && !(cfg.tol <= 0.0))
        throw NumericError("cg_fidelity_jvp: CG did not converge (relative residual " +
                           std::to_string(r.rel_residual) + " after " + std::to_string(r.iters) +
                           " iterations)");
    return mu * r.x;
}

} // namespace cupid
