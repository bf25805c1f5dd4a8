#pragma once

#include <functional>

#include "cupid/model.hpp"
#include "cupid/perturb.hpp"
#include "cupid/sparsity.hpp"

namespace cupid {

// ---- CUPID ------------------------------------------------------------------

struct CupidLossConfig {
    double lambda = 100.0;
    double epsilon_scale = 1e-5; // epsilon = scale * max |W x^(0)|
    int k = 6;                   // perturbations per loss evaluation
    int reweight_every = 20;     // epochs between reweighting refreshes (M)
    bool pif_only = false;       // "lambda -> infinity" mode: drop the comp term
    int wavelet_levels = 3;

    void validate() const {
        if (lambda < 0.0) throw DataError("CupidLossConfig: lambda must be >= 0");
        if (epsilon_scale <= 0.0) throw DataError("CupidLossConfig: epsilon must be positive");
        if (k < 1) throw DataError("CupidLossConfig: K must be >= 1");
        if (reweight_every < 1) throw DataError("CupidLossConfig: reweighting cadence must be >= 1");
    }
};

// Reweighted-l1 denominators 1/(|W x^(m)|_n + eps); eps is derived from the
// reweighting estimate itself so the loss is scale invariant.
struct CompWeights {
    Tensor inv_denom; // [N]
    double epsilon = 0.0;
};

inline CompWeights comp_weights(const ComplexImage& reweight, const Dtcwt& wt,
                                double epsilon_scale) {
    std::vector<Complex> c = wt.forward(reweight);
    double mx = 0.0;
    for (const Complex& z : c) mx = std::max(mx, std::abs(z));
    CompWeights out;
    out.epsilon = epsilon_scale * mx;
    if (out.epsilon <= 0.0) throw DataError("comp_weights: epsilon must be positive");
    out.inv_denom = Tensor({int64_t(c.size())});
    for (size_t i = 0; i < c.size(); ++i)
        out.inv_denom.data[i] = 1.0 / (std::abs(c[i]) + out.epsilon);
    return out;
}

// (1/N) sum_n |W(output)|_n / (|W(reweight)|_n + eps)
inline ad::Var loss_comp_traced(const ad::Var& output, const CompWeights& weights,
                                std::shared_ptr<const Dtcwt> wt) {
    using namespace ad;
    return mean(mul_const(cmag(dtcwt_forward(output, wt)), weights.inv_denom));
}

inline double loss_comp(const ComplexImage& output, const ComplexImage& reweight, const Dtcwt& wt,
                        double epsilon) {
    if (epsilon <= 0.0) throw DataError("loss_comp: epsilon must be positive");
    std::vector<Complex> num = wt.forward(output);
    std::vector<Complex> den = wt.forward(reweight);
    double s = 0.0;
    for (size_t i = 0; i < num.size(); ++i) s += std::abs(num[i]) / (std::abs(den[i]) + epsilon);
    return s / double(num.size());
}

// (1/K) sum_k ||p_k - p_k^est||_2 / ||p_k||_2 with p^est = f(x+p) - f(x);
// shared base output passed in so f(x_PI) is evaluated once.
inline ad::Var loss_pif_traced(const ad::Var& base_output,
                               const std::vector<ad::Var>& perturbed_outputs,
                               const std::vector<Perturbation>& ps) {
    using namespace ad;
    if (ps.empty() || perturbed_outputs.size() != ps.size())
        throw DataError("loss_pif: perturbation/output count mismatch");
    Var acc;
    for (size_t k = 0; k < ps.size(); ++k) {
        const double pnorm = norm2(ps[k].image);
        if (pnorm == 0.0) throw DataError("loss_pif: zero perturbation");
        Var est = sub(perturbed_outputs[k], base_output);
        Var term = scale(norm2(sub(Var::leaf(to_tensor(ps[k].image)), est)), 1.0 / pnorm);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, 1.0 / double(ps.size()));
}

// Functional form for arbitrary reconstruction maps.
inline double loss_pif(const std::function<ComplexImage(const ComplexImage&)>& f,
                       const ComplexImage& x_pi, const std::vector<Perturbation>& ps) {
    if (ps.empty()) throw DataError("loss_pif: no perturbations");
    const ComplexImage base = f(x_pi);
    double s = 0.0;
    for (const auto& p : ps) {
        const double pnorm = norm2(p.image);
        if (pnorm == 0.0) throw DataError("loss_pif: zero perturbation");
        ComplexImage est = f(x_pi + p.image) - base;
        s += norm2(p.image - est) / pnorm;
    }
    return s / double(ps.size());
}

struct CupidGraph {
    ad::Var total;
    ad::Var comp; // undefined in pif-only mode
    ad::Var pif;  // undefined when lambda == 0
    ad::Var output;

    double comp_value() const { return comp.defined() ? comp.value().data[0] : 0.0; }
    double pif_value() const { return pif.defined() ? pif.value().data[0] : 0.0; }
};

// Full training graph of L_CUPID = L_comp + lambda * L_pif. Runs K+1 network
// forwards; lambda = 0 skips the perturbation passes entirely.
inline CupidGraph build_cupid_loss(const UnrolledModel& model, const ComplexImage& x_pi,
                                   std::shared_ptr<const EncodingOperator> enc,
                                   const std::vector<Perturbation>& ps,
                                   const CompWeights& weights,
                                   std::shared_ptr<const Dtcwt> wt, const CupidLossConfig& cfg) {
    using namespace ad;
    cfg.validate();
    CupidGraph g;
    g.output = model.forward_traced(Var::leaf(to_tensor(x_pi)), enc);
    if (!cfg.pif_only) g.comp = loss_comp_traced(g.output, weights, wt);
    if (cfg.lambda > 0.0 || cfg.pif_only) {
        std::vector<Var> outs;
        outs.reserve(ps.size());
        for (const auto& p : ps)
            outs.push_back(model.forward_traced(Var::leaf(to_tensor(x_pi + p.image)), enc));
        g.pif = loss_pif_traced(g.output, outs, ps);
    }
    if (cfg.pif_only)
        g.total = g.pif;
    else if (g.pif.defined())
        g.total = add(g.comp, scale(g.pif, cfg.lambda));
    else
        g.total = g.comp;
    return g;
}

// ---- shared normalized l1-l2 -------------------------------------------------

// ||r||_2/||ref||_2 + ||r||_1/||ref||_1 on complex k-space (l1 over complex
// magnitudes); reference norms are constants.
inline ad::Var norm_l1l2_k(const ad::Var& yhat, const KSpaceData& yref) {
    using namespace ad;
    Tensor ref = kspace_to_tensor(yref);
    check_same_shape(ref, yhat.value(), "norm_l1l2");
    double n2 = 0.0, n1 = 0.0;
    for (const auto& coil : yref.coils)
        for (const Complex& z : coil.v) {
            n2 += std::norm(z);
            n1 += std::abs(z);
        }
    n2 = std::sqrt(n2);
    if (n2 == 0.0 || n1 == 0.0) throw DataError("norm_l1l2: zero reference");
    Var diff = sub(Var::leaf(std::move(ref)), yhat);
    return add(scale(norm2(diff), 1.0 / n2), scale(sum(cmag(diff)), 1.0 / n1));
}

inline double norm_l1l2(const KSpaceData& yref, const KSpaceData& yhat) {
    double n2 = 0.0, n1 = 0.0, d2 = 0.0, d1 = 0.0;
    for (size_t c = 0; c < yref.coils.size(); ++c)
        for (size_t i = 0; i < yref.coils[c].v.size(); ++i) {
            const Complex r = yref.coils[c].v[i];
            const Complex d = r - yhat.coils[c].v[i];
            n2 += std::norm(r);
            n1 += std::abs(r);
            d2 += std::norm(d);
            d1 += std::abs(d);
        }
    if (n2 == 0.0 || n1 == 0.0) throw DataError("norm_l1l2: zero reference");
    return std::sqrt(d2) / std::sqrt(n2) + d1 / n1;
}

// image-domain variant used by the equivariance term; the target arrives as a
// fixed tensor (denominators from its values)
inline ad::Var norm_l1l2_img(const Tensor& target, const ad::Var& got) {
    using namespace ad;
    check_same_shape(target, got.value(), "norm_l1l2_img");
    const size_t n = target.data.size() / 2;
    double n2 = 0.0, n1 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double re = target.data[i], im = target.data[n + i];
        n2 += re * re + im * im;
        n1 += std::hypot(re, im);
    }
    n2 = std::sqrt(n2);
    if (n2 == 0.0 || n1 == 0.0) throw DataError("norm_l1l2_img: zero reference");
    Var diff = sub(Var::leaf(target), got);
    return add(scale(norm2(diff), 1.0 / n2), scale(sum(cmag(diff)), 1.0 / n1));
}

// ---- supervised (full-reference k-space) -------------------------------------

inline ad::Var build_supervised_loss(const UnrolledModel& model, const ComplexImage& x_in,
                                     std::shared_ptr<const EncodingOperator> enc_input,
                                     const KSpaceData& y_ref,
                                     std::shared_ptr<const EncodingOperator> enc_full) {
    using namespace ad;
    Var out = model.forward_traced(Var::leaf(to_tensor(x_in)), enc_input);
    return norm_l1l2_k(encode_apply(out, enc_full), y_ref);
}

// ---- SSDU ---------------------------------------------------------------------

struct SsduConfig {
    double rho = 0.4; // |Lambda| / |Omega|
    uint64_t seed = 0;
};

// Disjoint exact partition of the sampled lines; the ACS block always stays in
// the training set Theta.
inline std::pair<SamplingMask, SamplingMask> ssdu_split(const SamplingMask& mask, double rho,
                                                        uint64_t seed) {
    if (!(rho > 0.0 && rho < 1.0)) throw DataError("ssdu_split: rho must lie in (0,1)");
    const int h = mask.height();
    const int a0 = mask.acs_start(), a1 = mask.acs_end();
    std::vector<int> candidates; // sampled lines outside ACS
    int omega = 0;
    for (int r = 0; r < h; ++r) {
        if (!mask.line(r)) continue;
        ++omega;
        if (r < a0 || r >= a1) candidates.push_back(r);
    }
    const int want = int(std::lround(rho * omega));
    if (want < 1 || want > int(candidates.size()))
        throw DataError("ssdu_split: cannot take " + std::to_string(want) +
                        " loss lines while keeping the ACS in the training set");
    Rng rng(seed);
    rng.shuffle(candidates);
    SamplingMask theta = mask, lambda = mask;
    std::fill(lambda.lines.begin(), lambda.lines.end(), uint8_t(0));
    for (int i = 0; i < want; ++i) {
        theta.lines[size_t(candidates[size_t(i)])] = 0;
        lambda.lines[size_t(candidates[size_t(i)])] = 1;
    }
    lambda.acs_lines = 0;
    return {theta, lambda};
}

inline KSpaceData restrict_to_mask(const KSpaceData& y, const SamplingMask& sub) {
    KSpaceData out(y.nc, y.h, y.w, sub);
    for (int c = 0; c < y.nc; ++c)
        for (int r = 0; r < y.h; ++r) {
            if (!sub.line(r)) continue;
            for (int q = 0; q < y.w; ++q) out.coils[size_t(c)].at(r, q) = y.coils[size_t(c)].at(r, q);
        }
    return out;
}

inline ad::Var build_ssdu_loss(const UnrolledModel& model, const ComplexImage& x_in_theta,
                               std::shared_ptr<const EncodingOperator> enc_theta,
                               const KSpaceData& y_lambda,
                               std::shared_ptr<const EncodingOperator> enc_lambda) {
    using namespace ad;
    Var out = model.forward_traced(Var::leaf(to_tensor(x_in_theta)), enc_theta);
    return norm_l1l2_k(encode_apply(out, enc_lambda), y_lambda);
}

// ---- equivariant imaging -------------------------------------------------------

struct EiConfig {
    std::vector<ad::GridTransform> group = {ad::GridTransform::Rot90, ad::GridTransform::Rot180,
                                            ad::GridTransform::Rot270, ad::GridTransform::FlipH,
                                            ad::GridTransform::FlipV};
    double beta = 1.0;
};

struct EiGraph {
    ad::Var total, data_consistency, equivariance;
};

// Data consistency on the acquired lines plus transformation equivariance:
// the reconstruction of the re-encoded transformed output should match the
// transformed output.
inline EiGraph build_ei_loss(const UnrolledModel& model, const ComplexImage& x_in,
                             std::shared_ptr<const EncodingOperator> enc, const KSpaceData& y,
                             const EiConfig& cfg) {
    using namespace ad;
    EiGraph g;
    Var xhat = model.forward_traced(Var::leaf(to_tensor(x_in)), enc);
    g.data_consistency = norm_l1l2_k(encode_apply(xhat, enc), y);
    Var acc;
    for (auto t : cfg.group) {
        Var tx = grid_transform(xhat, t);
        Var rec = model.forward_traced(tx, enc); // traced rhs: E^H E (T x)
        Var term = norm_l1l2_img(tx.value(), rec);
        acc = acc.defined() ? add(acc, term) : term;
    }
    g.equivariance = acc;
    g.total = cfg.beta > 0.0 ? add(g.data_consistency, scale(g.equivariance, cfg.beta))
                             : g.data_consistency;
    return g;
}

} // namespace cupid
