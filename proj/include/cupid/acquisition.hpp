#pragma once

#include "cupid/encoding.hpp"
#include "cupid/rng.hpp"

namespace cupid {

// i.i.d. complex Gaussian noise, sigma per real/imag component in k-space units.
struct NoiseModel {
    double sigma = 0.0;
};

// y = mask o FFT(s_c o x) + n, noise added on sampled entries only.
inline KSpaceData simulate_acquisition(const ComplexImage& x, const CoilSensitivities& sens,
                                       const SamplingMask& mask, const NoiseModel& noise,
                                       uint64_t seed) {
    if (noise.sigma < 0.0) throw DataError("simulate_acquisition: negative sigma");
    EncodingOperator enc(sens, mask);
    KSpaceData y = enc.apply(x);
    if (noise.sigma > 0.0) {
        Rng rng(seed);
        for (auto& coil : y.coils) {
            for (int r = 0; r < coil.h; ++r) {
                if (!mask.line(r)) continue;
                for (int q = 0; q < coil.w; ++q)
                    coil.at(r, q) += noise.sigma * rng.cnormal();
            }
        }
    }
    return y;
}

} // namespace cupid
