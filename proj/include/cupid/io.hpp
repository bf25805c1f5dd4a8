#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cupid/coils.hpp"
#include "cupid/encoding.hpp"
#include "cupid/metrics.hpp"

#include <json.hpp>

namespace cupid {

// On-disk instance container (magic "CPID1"): header, then little-endian
// float32 interleaved complex payloads for x_true, coils, y, x_PI. The struct
// mirrors the file exactly, so write/read round-trips are bit-identical.
struct DatasetFile {
    uint32_t h = 0, w = 0, nc = 0;
    SamplingMask mask;
    uint64_t phantom_seed = 0, coil_seed = 0, mask_seed = 0, noise_seed = 0;
    double sigma = 0.0;
    std::string pi_method = "cgsense";
    std::vector<float> x_true; // 2*h*w
    std::vector<float> coils;  // 2*nc*h*w
    std::vector<float> y;      // 2*nc*h*w
    std::vector<float> x_pi;   // 2*h*w

    bool operator==(const DatasetFile& o) const {
        return h == o.h && w == o.w && nc == o.nc && mask.lines == o.mask.lines &&
               mask.r_nominal == o.mask.r_nominal && mask.acs_lines == o.mask.acs_lines &&
               mask.kind == o.mask.kind && mask.seed == o.mask.seed &&
               phantom_seed == o.phantom_seed && coil_seed == o.coil_seed &&
               mask_seed == o.mask_seed && noise_seed == o.noise_seed && sigma == o.sigma &&
               pi_method == o.pi_method && x_true == o.x_true && coils == o.coils && y == o.y &&
               x_pi == o.x_pi;
    }
};

namespace detail {

inline std::vector<float> pack_f32(const ComplexImage& x) {
    std::vector<float> out(2 * x.v.size());
    for (size_t i = 0; i < x.v.size(); ++i) {
        out[2 * i] = float(x.v[i].real());
        out[2 * i + 1] = float(x.v[i].imag());
    }
    return out;
}

inline ComplexImage unpack_f32(const std::vector<float>& v, int h, int w, size_t offset = 0) {
    ComplexImage x(h, w);
    for (size_t i = 0; i < x.v.size(); ++i)
        x.v[i] = Complex(v[offset + 2 * i], v[offset + 2 * i + 1]);
    return x;
}

} // namespace detail

inline ComplexImage dataset_x_true(const DatasetFile& d) {
    return detail::unpack_f32(d.x_true, int(d.h), int(d.w));
}
inline ComplexImage dataset_x_pi(const DatasetFile& d) {
    return detail::unpack_f32(d.x_pi, int(d.h), int(d.w));
}
inline CoilSensitivities dataset_coils(const DatasetFile& d) {
    CoilSensitivities s;
    s.nc = int(d.nc);
    s.h = int(d.h);
    s.w = int(d.w);
    for (uint32_t c = 0; c < d.nc; ++c)
        s.maps.push_back(detail::unpack_f32(d.coils, int(d.h), int(d.w),
                                            size_t(c) * 2 * d.h * d.w));
    return s;
}
inline KSpaceData dataset_y(const DatasetFile& d) {
    KSpaceData y(int(d.nc), int(d.h), int(d.w), d.mask);
    for (uint32_t c = 0; c < d.nc; ++c)
        y.coils[c] = detail::unpack_f32(d.y, int(d.h), int(d.w), size_t(c) * 2 * d.h * d.w);
    return y;
}

inline void set_dataset_payload(DatasetFile& d, const ComplexImage& x_true,
                                const CoilSensitivities& coils, const KSpaceData& y,
                                const ComplexImage& x_pi) {
    d.x_true = detail::pack_f32(x_true);
    d.x_pi = detail::pack_f32(x_pi);
    d.coils.clear();
    for (const auto& m : coils.maps) {
        auto p = detail::pack_f32(m);
        d.coils.insert(d.coils.end(), p.begin(), p.end());
    }
    d.y.clear();
    for (const auto& c : y.coils) {
        auto p = detail::pack_f32(c);
        d.y.insert(d.y.end(), p.begin(), p.end());
    }
}

namespace detail {

template <typename T>
void wr(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T rd(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}
inline void wr_str(std::ofstream& f, const std::string& s) {
    const uint32_t n = uint32_t(s.size());
    wr(f, n);
    f.write(s.data(), n);
}
inline std::string rd_str(std::ifstream& f) {
    const uint32_t n = rd<uint32_t>(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    return s;
}

} // namespace detail

inline void write_dataset(const std::string& path, const DatasetFile& d,
                          bool with_sidecar = true) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open dataset for writing: " + path);
    f.write("CPID1", 5);
    detail::wr<uint32_t>(f, 1); // version
    detail::wr(f, d.h);
    detail::wr(f, d.w);
    detail::wr(f, d.nc);
    detail::wr<uint8_t>(f, uint8_t(d.mask.kind));
    detail::wr<uint32_t>(f, uint32_t(d.mask.r_nominal));
    detail::wr<uint32_t>(f, uint32_t(d.mask.acs_lines));
    detail::wr<uint64_t>(f, d.mask.seed);
    f.write(reinterpret_cast<const char*>(d.mask.lines.data()), long(d.mask.lines.size()));
    detail::wr(f, d.phantom_seed);
    detail::wr(f, d.coil_seed);
    detail::wr(f, d.mask_seed);
    detail::wr(f, d.noise_seed);
    detail::wr(f, d.sigma);
    detail::wr_str(f, d.pi_method);
    auto warr = [&f](const std::vector<float>& v) {
        detail::wr<uint64_t>(f, v.size());
        f.write(reinterpret_cast<const char*>(v.data()), long(v.size() * 4));
    };
    warr(d.x_true);
    warr(d.coils);
    warr(d.y);
    warr(d.x_pi);
    if (!f) throw DataError("dataset write failed: " + path);

    if (with_sidecar) {
        nlohmann::json j;
        j["format"] = "CPID1";
        j["dims"] = {d.h, d.w};
        j["coils"] = d.nc;
        j["mask"] = {{"kind", to_string(d.mask.kind)},
                     {"r_nominal", d.mask.r_nominal},
                     {"r_effective", d.mask.r_effective()},
                     {"acs_lines", d.mask.acs_lines},
                     {"sampled_lines", d.mask.sampled_line_count()},
                     {"seed", d.mask.seed}};
        j["seeds"] = {{"phantom", d.phantom_seed},
                      {"coils", d.coil_seed},
                      {"mask", d.mask_seed},
                      {"noise", d.noise_seed}};
        j["sigma"] = d.sigma;
        j["pi_method"] = d.pi_method;
        std::ofstream js(path + ".json");
        js << j.dump(2) << "\n";
    }
}

inline DatasetFile read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open dataset: " + path);
    char magic[5];
    f.read(magic, 5);
    if (!f || std::memcmp(magic, "CPID1", 5) != 0) throw DataError("not a CPID1 file: " + path);
    if (detail::rd<uint32_t>(f) != 1) throw DataError("unsupported dataset version: " + path);
    DatasetFile d;
    d.h = detail::rd<uint32_t>(f);
    d.w = detail::rd<uint32_t>(f);
    d.nc = detail::rd<uint32_t>(f);
    d.mask.kind = MaskKind(detail::rd<uint8_t>(f));
    d.mask.r_nominal = int(detail::rd<uint32_t>(f));
    d.mask.acs_lines = int(detail::rd<uint32_t>(f));
    d.mask.seed = detail::rd<uint64_t>(f);
    d.mask.lines.resize(d.h);
    f.read(reinterpret_cast<char*>(d.mask.lines.data()), long(d.h));
    d.phantom_seed = detail::rd<uint64_t>(f);
    d.coil_seed = detail::rd<uint64_t>(f);
    d.mask_seed = detail::rd<uint64_t>(f);
    d.noise_seed = detail::rd<uint64_t>(f);
    d.sigma = detail::rd<double>(f);
    d.pi_method = detail::rd_str(f);
    auto rarr = [&f, &path](std::vector<float>& v) {
        const uint64_t n = detail::rd<uint64_t>(f);
        v.resize(n);
        f.read(reinterpret_cast<char*>(v.data()), long(n * 4));
        if (!f) throw DataError("truncated dataset: " + path);
    };
    rarr(d.x_true);
    rarr(d.coils);
    rarr(d.y);
    rarr(d.x_pi);
    if (d.x_true.size() != size_t(2) * d.h * d.w || d.coils.size() != size_t(2) * d.nc * d.h * d.w)
        throw DataError("dataset payload sizes inconsistent with header: " + path);
    return d;
}

// Single complex image container (magic "CPIMG1"), same float32 layout.
inline void write_image_file(const std::string& path, const ComplexImage& x) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open image for writing: " + path);
    f.write("CPIMG1", 6);
    detail::wr<uint32_t>(f, 1);
    detail::wr<uint32_t>(f, uint32_t(x.h));
    detail::wr<uint32_t>(f, uint32_t(x.w));
    std::vector<float> payload = detail::pack_f32(x);
    f.write(reinterpret_cast<const char*>(payload.data()), long(payload.size() * 4));
    if (!f) throw DataError("image write failed: " + path);
}

inline ComplexImage read_image_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open image: " + path);
    char magic[6];
    f.read(magic, 6);
    if (!f || std::memcmp(magic, "CPIMG1", 6) != 0) throw DataError("not a CPIMG1 file: " + path);
    if (detail::rd<uint32_t>(f) != 1) throw DataError("unsupported image version: " + path);
    const uint32_t h = detail::rd<uint32_t>(f), w = detail::rd<uint32_t>(f);
    std::vector<float> payload(size_t(2) * h * w);
    f.read(reinterpret_cast<char*>(payload.data()), long(payload.size() * 4));
    if (!f) throw DataError("truncated image file: " + path);
    return detail::unpack_f32(payload, int(h), int(w));
}

// ---- viewable exports -------------------------------------------------------

// 16-bit binary PGM of the magnitude, normalized to the image maximum.
inline void write_pgm16(const std::string& path, const ComplexImage& x) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open PGM for writing: " + path);
    const double mx = std::max(max_abs(x), 1e-300);
    f << "P5\n" << x.w << " " << x.h << "\n65535\n";
    for (const Complex& z : x.v) {
        const unsigned v = unsigned(std::lround(std::abs(z) / mx * 65535.0));
        const unsigned char hi = (v >> 8) & 0xFF, lo = v & 0xFF;
        f.put(char(hi));
        f.put(char(lo));
    }
    if (!f) throw DataError("PGM write failed: " + path);
}

namespace detail {

inline uint32_t crc32_png(const unsigned char* data, size_t n, uint32_t crc = 0xFFFFFFFFu) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc;
}

inline void png_chunk(std::ofstream& f, const char type[4],
                      const std::vector<unsigned char>& payload) {
    auto be32 = [](uint32_t v) {
        return std::array<unsigned char, 4>{(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                                            (unsigned char)(v >> 8), (unsigned char)v};
    };
    auto len = be32(uint32_t(payload.size()));
    f.write(reinterpret_cast<const char*>(len.data()), 4);
    std::vector<unsigned char> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    f.write(reinterpret_cast<const char*>(body.data()), long(body.size()));
    auto crc = be32(crc32_png(body.data(), body.size()) ^ 0xFFFFFFFFu);
    f.write(reinterpret_cast<const char*>(crc.data()), 4);
}

} // namespace detail

// Minimal 16-bit grayscale PNG (stored deflate blocks, no external deps).
inline void write_png16(const std::string& path, const ComplexImage& x) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open PNG for writing: " + path);
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    f.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<unsigned char> ihdr;
    auto push32 = [&ihdr](uint32_t v) {
        ihdr.push_back((unsigned char)(v >> 24));
        ihdr.push_back((unsigned char)(v >> 16));
        ihdr.push_back((unsigned char)(v >> 8));
        ihdr.push_back((unsigned char)v);
    };
    push32(uint32_t(x.w));
    push32(uint32_t(x.h));
    ihdr.push_back(16); // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::png_chunk(f, "IHDR", ihdr);

    // raw scanlines: filter byte 0 + big-endian 16-bit samples
    const double mx = std::max(max_abs(x), 1e-300);
    std::vector<unsigned char> raw;
    raw.reserve(size_t(x.h) * (1 + 2 * size_t(x.w)));
    for (int r = 0; r < x.h; ++r) {
        raw.push_back(0);
        for (int c = 0; c < x.w; ++c) {
            const unsigned v = unsigned(std::lround(std::abs(x.at(r, c)) / mx * 65535.0));
            raw.push_back((unsigned char)(v >> 8));
            raw.push_back((unsigned char)(v & 0xFF));
        }
    }
    // zlib stream with stored deflate blocks
    std::vector<unsigned char> idat = {0x78, 0x01};
    size_t off = 0;
    while (off < raw.size()) {
        const size_t len = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + len == raw.size();
        idat.push_back(last ? 1 : 0);
        idat.push_back((unsigned char)(len & 0xFF));
        idat.push_back((unsigned char)(len >> 8));
        idat.push_back((unsigned char)(~len & 0xFF));
        idat.push_back((unsigned char)((~len >> 8) & 0xFF));
        idat.insert(idat.end(), raw.begin() + long(off), raw.begin() + long(off + len));
        off += len;
    }
    uint32_t a = 1, b = 0;
    for (unsigned char byte : raw) {
        a = (a + byte) % 65521;
        b = (b + a) % 65521;
    }
    const uint32_t adler = (b << 16) | a;
    idat.push_back((unsigned char)(adler >> 24));
    idat.push_back((unsigned char)(adler >> 16));
    idat.push_back((unsigned char)(adler >> 8));
    idat.push_back((unsigned char)adler);
    detail::png_chunk(f, "IDAT", idat);
    detail::png_chunk(f, "IEND", {});
    if (!f) throw DataError("PNG write failed: " + path);
}

// ---- metric report serialization ---------------------------------------------

inline std::string psnr_to_string(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::string metric_report_csv(const MetricReport& rep) {
    std::string out = "slice,psnr_db,ssim\n";
    for (size_t i = 0; i < rep.slices.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.6f\n", i,
                      psnr_to_string(rep.slices[i].psnr_db).c_str(), rep.slices[i].ssim_val);
        out += buf;
    }
    char agg[160];
    std::snprintf(agg, sizeof(agg), "aggregate,%s,%.6f\naggregate_std,%s,%.6f\n",
                  psnr_to_string(rep.psnr_mean()).c_str(), rep.ssim_mean(),
                  psnr_to_string(rep.psnr_std()).c_str(), rep.ssim_std());
    return out + agg;
}

inline nlohmann::json metric_report_json(const MetricReport& rep) {
    nlohmann::json j;
    j["slices"] = nlohmann::json::array();
    for (const auto& s : rep.slices) {
        nlohmann::json e;
        if (std::isinf(s.psnr_db))
            e["psnr_db"] = "inf";
        else
            e["psnr_db"] = s.psnr_db;
        e["ssim"] = s.ssim_val;
        j["slices"].push_back(e);
    }
    if (std::isinf(rep.psnr_mean()))
        j["psnr_mean"] = "inf";
    else
        j["psnr_mean"] = rep.psnr_mean();
    j["psnr_std"] = rep.psnr_std();
    j["ssim_mean"] = rep.ssim_mean();
    j["ssim_std"] = rep.ssim_std();
    return j;
}

} // namespace cupid
