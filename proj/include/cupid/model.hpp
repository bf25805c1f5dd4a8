#pragma once

#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "cupid/autodiff.hpp"
#include "cupid/rng.hpp"

namespace cupid {

// Alternation depth and regularizer shape of the unrolled network. Parameters
// are shared across all unrolls (weight tying).
struct ModelConfig {
    int unrolls = 5;   // T
    int blocks = 4;    // residual blocks in the regularizer
    int channels = 16; // feature channels
    int kernel = 3;
    double mu = 0.05; // quadratic-penalty weight of the data-fidelity solve
    bool train_mu = false;
    bool residual = true; // regularizer = identity + learned correction
    double residual_scale = 0.1;
    CgConfig cg{15, 1e-6};

    // desk-scale default is the struct itself
    static ModelConfig desk() { return {}; }
    static ModelConfig toy() {
        ModelConfig c;
        c.unrolls = 3;
        c.blocks = 2;
        c.channels = 8;
        return c;
    }
    // parity preset mirroring the full-scale architecture
    static ModelConfig paper_scale() {
        ModelConfig c;
        c.unrolls = 10;
        c.blocks = 15;
        c.channels = 64;
        return c;
    }

    void validate() const {
        if (unrolls < 0 || blocks < 1 || channels < 1 || kernel < 1 || kernel % 2 == 0)
            throw DataError("ModelConfig: invalid architecture fields");
        if (mu <= 0.0) throw DataError("ModelConfig: mu must be positive");
    }
};

// VS-QP unrolled reconstruction network: T alternations of a CNN regularizer
// and an implicit CG data-fidelity solve.
class UnrolledModel {
public:
    UnrolledModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const int k = cfg_.kernel, ch = cfg_.channels;
        add_conv_(rng, ch, 2, k, false);
        for (int b = 0; b < cfg_.blocks; ++b) {
            add_conv_(rng, ch, ch, k, false);
            add_conv_(rng, ch, ch, k, false);
        }
        add_conv_(rng, 2, ch, k, true); // zero-initialized output projection
        if (cfg_.train_mu) {
            Tensor m({1});
            m.data[0] = cfg_.mu;
            params_.push_back(ad::Var::leaf(std::move(m), true));
        }
    }

    const ModelConfig& config() const { return cfg_; }
    std::vector<ad::Var>& params() { return params_; }
    const std::vector<ad::Var>& params() const { return params_; }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.value().data.size();
        return n;
    }

    std::vector<double> flatten_params() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const auto& p : params_)
            out.insert(out.end(), p.value().data.begin(), p.value().data.end());
        return out;
    }

    void assign_params(const std::vector<double>& flat) {
        if (flat.size() != param_count())
            throw DataError("assign_params: expected " + std::to_string(param_count()) +
                            " values, got " + std::to_string(flat.size()));
        size_t off = 0;
        for (auto& p : params_) {
            auto& d = p.mutable_value().data;
            std::copy(flat.begin() + long(off), flat.begin() + long(off + d.size()), d.begin());
            off += d.size();
        }
    }

    void zero_grads() {
        for (auto& p : params_) p.zero_grad();
    }

    // CNN proximal stage. Residual mode computes x + correction so the
    // untrained network is the identity.
    ad::Var regularizer(const ad::Var& x) const {
        using namespace ad;
        Var y = conv2d(x, params_[0], params_[1]);
        for (int b = 0; b < cfg_.blocks; ++b) {
            const size_t i = 2 + size_t(b) * 4;
            Var t = conv2d(relu(conv2d(y, params_[i], params_[i + 1])), params_[i + 2],
                           params_[i + 3]);
            y = add(y, scale(t, cfg_.residual_scale));
        }
        const size_t o = 2 + size_t(cfg_.blocks) * 4;
        Var corr = conv2d(y, params_[o], params_[o + 1]);
        return cfg_.residual ? add(x, corr) : corr;
    }

    // x^0 = x_in; for i in 1..T: z = regularizer(x), x = df(z). The right-hand
    // side comes from the input image itself unless the caller supplies one
    // (raw-data pathways pass E^H y).
    ad::Var forward_traced(const ad::Var& x_in, std::shared_ptr<const EncodingOperator> enc,
                           ad::Var rhs = {}) const {
        using namespace ad;
        if (!rhs.defined()) {
            if (x_in.node()->needs_grad)
                rhs = encode_normal(x_in, enc);
            else
                rhs = Var::leaf(to_tensor(enc->rhs_from_image(to_image(x_in.value()))));
        }
        Var mu_var;
        if (cfg_.train_mu) mu_var = params_.back();
        Var x = x_in;
        for (int t = 0; t < cfg_.unrolls; ++t) {
            Var z = regularizer(x);
            try {
                x = df_block(z, rhs, enc, cfg_.mu, cfg_.cg, mu_var);
            } catch (const NumericError& e) {
                throw NumericError("unroll " + std::to_string(t + 1) + ": " + e.what());
            }
        }
        return x;
    }

    ComplexImage apply(const ComplexImage& x_in,
                       std::shared_ptr<const EncodingOperator> enc) const {
        ad::Var out = forward_traced(ad::Var::leaf(to_tensor(x_in)), enc);
        return to_image(out.value());
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open checkpoint for writing: " + path);
        f.write("CPIDCKPT", 8);
        auto w32 = [&f](int32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
        auto w64 = [&f](double v) { f.write(reinterpret_cast<const char*>(&v), 8); };
        w32(1); // version
        w32(cfg_.unrolls);
        w32(cfg_.blocks);
        w32(cfg_.channels);
        w32(cfg_.kernel);
        w32(cfg_.train_mu ? 1 : 0);
        w32(cfg_.residual ? 1 : 0);
        w32(cfg_.cg.max_iter);
        w64(cfg_.mu);
        w64(cfg_.residual_scale);
        w64(cfg_.cg.tol);
        const std::vector<double> flat = flatten_params();
        const uint64_t n = flat.size();
        f.write(reinterpret_cast<const char*>(&n), 8);
        f.write(reinterpret_cast<const char*>(flat.data()), long(n * 8));
        if (!f) throw DataError("checkpoint write failed: " + path);
    }

    static UnrolledModel load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open checkpoint: " + path);
        char magic[8];
        f.read(magic, 8);
        if (!f || std::memcmp(magic, "CPIDCKPT", 8) != 0)
            throw DataError("not a checkpoint file: " + path);
        auto r32 = [&f]() {
            int32_t v;
            f.read(reinterpret_cast<char*>(&v), 4);
            return v;
        };
        auto r64 = [&f]() {
            double v;
            f.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        const int32_t version = r32();
        if (version != 1) throw DataError("unsupported checkpoint version");
        ModelConfig cfg;
        cfg.unrolls = r32();
        cfg.blocks = r32();
        cfg.channels = r32();
        cfg.kernel = r32();
        cfg.train_mu = r32() != 0;
        cfg.residual = r32() != 0;
        cfg.cg.max_iter = r32();
        cfg.mu = r64();
        cfg.residual_scale = r64();
        cfg.cg.tol = r64();
        uint64_t n = 0;
        f.read(reinterpret_cast<char*>(&n), 8);
        std::vector<double> flat(n);
        f.read(reinterpret_cast<char*>(flat.data()), long(n * 8));
        if (!f) throw DataError("truncated checkpoint: " + path);
        UnrolledModel m(cfg, 0);
        m.assign_params(flat);
        return m;
    }

private:
    void add_conv_(Rng& rng, int out_ch, int in_ch, int k, bool zero_init) {
        Tensor w({out_ch, in_ch, k, k});
        if (!zero_init) {
            const double std = std::sqrt(2.0 / double(in_ch * k * k));
            for (double& v : w.data) v = std * rng.normal();
        }
        params_.push_back(ad::Var::leaf(std::move(w), true));
        params_.push_back(ad::Var::leaf(Tensor({out_ch}), true));
    }

    ModelConfig cfg_;
    std::vector<ad::Var> params_;
};

} // namespace cupid
