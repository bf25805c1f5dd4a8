#pragma once

#include "cupid/acquisition.hpp"
#include "cupid/grappa.hpp"
#include "cupid/phantom.hpp"
#include "cupid/train.hpp"

namespace cupid {

// Everything needed to reproduce one synthetic scan: the geometry knobs plus a
// base seed from which all sub-seeds derive.
struct InstanceConfig {
    int h = 64, w = 64, nc = 4;
    int r = 4, acs = 8;
    MaskKind kind = MaskKind::Equidistant;
    double sigma = 0.01;
    uint64_t seed = 1234;
    std::string pi_method = "cgsense"; // cgsense | grappa
    CgConfig pi_cg{};                  // CG-SENSE budget for the x_PI input

    uint64_t phantom_seed() const { return seed; }
    uint64_t coil_seed() const { return seed + 101; }
    uint64_t mask_seed() const { return seed + 202; }
    uint64_t noise_seed() const { return seed + 303; }
    uint64_t pert_seed() const { return seed + 404; }
    uint64_t model_seed() const { return seed + 505; }
    uint64_t train_seed() const { return seed + 606; }
};

struct Instance {
    InstanceConfig cfg;
    ComplexImage x_true;
    CoilSensitivities coils;
    SamplingMask mask;
    KSpaceData y;
    ComplexImage x_pi;
    std::shared_ptr<const EncodingOperator> enc;
};

inline ComplexImage reconstruct_pi(const KSpaceData& y, const EncodingOperator& enc,
                                   const std::string& method, const CgConfig& cg = {}) {
    if (method == "cgsense") return cg_sense(y, enc, cg);
    if (method == "grappa") {
        GrappaKernel kern = grappa_calibrate(y);
        return grappa_combine(grappa_reconstruct(y, kern), enc.sensitivities());
    }
    throw DataError("unknown parallel-imaging method: " + method);
}

inline Instance make_instance(const InstanceConfig& cfg) {
    Instance inst;
    inst.cfg = cfg;
    inst.x_true = make_phantom(cfg.h, cfg.w, cfg.phantom_seed());
    inst.coils = make_coils(cfg.h, cfg.w, cfg.nc, cfg.coil_seed());
    inst.mask = make_mask(cfg.h, cfg.r, cfg.acs, cfg.kind, cfg.mask_seed());
    inst.y = simulate_acquisition(inst.x_true, inst.coils, inst.mask, NoiseModel{cfg.sigma},
                                  cfg.noise_seed());
    inst.enc = std::make_shared<const EncodingOperator>(inst.coils, inst.mask);
    inst.x_pi = reconstruct_pi(inst.y, *inst.enc, cfg.pi_method, cfg.pi_cg);
    return inst;
}

struct ZeroShotOutcome {
    double psnr_input = 0.0, ssim_input = 0.0; // x_PI against truth
    double psnr_out = 0.0, ssim_out = 0.0;     // trained output against truth
    TrainResult train_result;
};

// Scan-specific training of a fresh model on one instance with the CUPID loss.
inline ZeroShotOutcome run_zero_shot_cupid(const Instance& inst, const ModelConfig& mcfg,
                                           const CupidLossConfig& lcfg, TrainConfig tcfg) {
    ZeroShotOutcome out;
    out.psnr_input = psnr(inst.x_true, inst.x_pi);
    out.ssim_input = ssim(inst.x_true, inst.x_pi);
    UnrolledModel model(mcfg, inst.cfg.model_seed());
    std::vector<TrainSample> samples = {
        make_cupid_sample(inst.x_pi, inst.enc, lcfg, inst.cfg.pert_seed(), &inst.x_true)};
    tcfg.mode = TrainMode::ZeroShot;
    if (tcfg.seed == 0) tcfg.seed = inst.cfg.train_seed();
    out.train_result = train(model, samples, LossKind::Cupid, tcfg, lcfg);
    out.psnr_out = psnr(inst.x_true, out.train_result.last_output);
    out.ssim_out = ssim(inst.x_true, out.train_result.last_output);
    return out;
}

} // namespace cupid
