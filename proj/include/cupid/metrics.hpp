#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cupid/image.hpp"

namespace cupid {

// PSNR in dB on magnitude images: 20 log10(max|ref| / RMSE). Exact equality
// yields +infinity (serialized as a sentinel by the I/O layer).
inline double psnr(const ComplexImage& ref, const ComplexImage& test) {
    check_same_shape(ref, test, "psnr");
    double peak = 0.0, se = 0.0;
    for (size_t i = 0; i < ref.v.size(); ++i) {
        const double a = std::abs(ref.v[i]);
        const double d = a - std::abs(test.v[i]);
        peak = std::max(peak, a);
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double rmse = std::sqrt(se / double(ref.v.size()));
    return 20.0 * std::log10(peak / rmse);
}

// SSIM on magnitude images: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range max|ref|; mean over fully valid window positions.
inline double ssim(const ComplexImage& ref, const ComplexImage& test) {
    check_same_shape(ref, test, "ssim");
    const int win = 11, half = win / 2;
    if (ref.h < win || ref.w < win) throw DataError("ssim: image smaller than the 11x11 window");
    static const std::vector<double> kernel = [] {
        std::vector<double> k(size_t(11) * 11);
        const double sigma = 1.5;
        double s = 0.0;
        for (int r = 0; r < 11; ++r)
            for (int c = 0; c < 11; ++c) {
                const double d2 = double((r - 5) * (r - 5) + (c - 5) * (c - 5));
                k[size_t(r) * 11 + size_t(c)] = std::exp(-d2 / (2 * sigma * sigma));
                s += k[size_t(r) * 11 + size_t(c)];
            }
        for (double& v : k) v /= s;
        return k;
    }();

    std::vector<double> a(ref.v.size()), b(ref.v.size());
    double peak = 0.0;
    for (size_t i = 0; i < ref.v.size(); ++i) {
        a[i] = std::abs(ref.v[i]);
        b[i] = std::abs(test.v[i]);
        peak = std::max(peak, a[i]);
    }
    const double L = peak > 0.0 ? peak : 1.0;
    const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);

    double acc = 0.0;
    int count = 0;
    for (int r = half; r < ref.h - half; ++r) {
        for (int c = half; c < ref.w - half; ++c) {
            double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
            for (int u = -half; u <= half; ++u)
                for (int v = -half; v <= half; ++v) {
                    const double k = kernel[size_t(u + half) * 11 + size_t(v + half)];
                    const double pa = a[size_t(r + u) * size_t(ref.w) + size_t(c + v)];
                    const double pb = b[size_t(r + u) * size_t(ref.w) + size_t(c + v)];
                    ma += k * pa;
                    mb += k * pb;
                    va += k * pa * pa;
                    vb += k * pb * pb;
                    cov += k * pa * pb;
                }
            va -= ma * ma;
            vb -= mb * mb;
            cov -= ma * mb;
            const double num = (2 * ma * mb + c1) * (2 * cov + c2);
            const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            acc += num / den;
            ++count;
        }
    }
    return acc / double(count);
}

struct SliceMetrics {
    double psnr_db = 0.0;
    double ssim_val = 0.0;
};

// Per-slice metrics with mean and standard deviation aggregates.
struct MetricReport {
    std::vector<SliceMetrics> slices;

    static double mean_of(const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / double(v.size());
    }
    static double std_of(const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double m = mean_of(v);
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / double(v.size() - 1));
    }

    double psnr_mean() const { return mean_of(collect_(&SliceMetrics::psnr_db)); }
    double psnr_std() const { return std_of(collect_(&SliceMetrics::psnr_db)); }
    double ssim_mean() const { return mean_of(collect_(&SliceMetrics::ssim_val)); }
    double ssim_std() const { return std_of(collect_(&SliceMetrics::ssim_val)); }

private:
    std::vector<double> collect_(double SliceMetrics::* field) const {
        std::vector<double> v;
        v.reserve(slices.size());
        for (const auto& s : slices) v.push_back(s.*field);
        return v;
    }
};

} // namespace cupid
