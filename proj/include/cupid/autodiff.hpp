#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "cupid/cg.hpp"
#include "cupid/dtcwt.hpp"
#include "cupid/encoding.hpp"
#include "cupid/image.hpp"
#include "cupid/tensor.hpp"

namespace cupid {
namespace ad {

// Reverse-mode tape over dense real tensors. Complex quantities travel as a
// leading (real, imag) channel pair; linear operators propagate cotangents
// through their adjoints.
struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backprop;
    const char* op = "leaf";
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var leaf(Tensor value, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->needs_grad = requires_grad;
        return Var(n);
    }

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool defined() const { return node_ != nullptr; }
    NodePtr node() const { return node_; }

    void zero_grad() { node_->grad = Tensor(); }

private:
    NodePtr node_;
};

inline void ensure_grad(Node& n) {
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
}

inline Var make_op(const char* op, Tensor value, std::vector<Var> inputs,
                   std::function<void(Node&)> backprop) {
    if (!value.all_finite())
        throw NumericError(std::string("autodiff: non-finite result in op '") + op + "'");
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    for (const Var& v : inputs) {
        n->inputs.push_back(v.node());
        n->needs_grad = n->needs_grad || v.node()->needs_grad;
    }
    if (n->needs_grad) n->backprop = std::move(backprop);
    return Var(n);
}

// Reverse accumulation from a scalar loss; every reachable node is visited
// exactly once in reverse topological order.
inline void backward(const Var& loss) {
    if (loss.value().numel() != 1)
        throw DataError("backward: loss must be a scalar, got " + loss.value().shape_str());
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            Node* child = n->inputs[next++].get();
            if (child->needs_grad && !seen.count(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    ensure_grad(*loss.node());
    loss.node()->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.data.empty()) n->backprop(*n);
    }
}

// ---- elementwise and reduction ops ----------------------------------------

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    return make_op("add", std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node& in = *n.inputs[size_t(k)];
            if (!in.needs_grad) continue;
            ensure_grad(in);
            for (size_t i = 0; i < n.grad.data.size(); ++i) in.grad.data[i] += n.grad.data[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
    return make_op("sub", std::move(out), {a, b}, [](Node& n) {
        const double sign[2] = {1.0, -1.0};
        for (int k = 0; k < 2; ++k) {
            Node& in = *n.inputs[size_t(k)];
            if (!in.needs_grad) continue;
            ensure_grad(in);
            for (size_t i = 0; i < n.grad.data.size(); ++i)
                in.grad.data[i] += sign[k] * n.grad.data[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    return make_op("mul", std::move(out), {a, b}, [](Node& n) {
        Node& ia = *n.inputs[0];
        Node& ib = *n.inputs[1];
        if (ia.needs_grad) {
            ensure_grad(ia);
            for (size_t i = 0; i < n.grad.data.size(); ++i)
                ia.grad.data[i] += n.grad.data[i] * ib.value.data[i];
        }
        if (ib.needs_grad) {
            ensure_grad(ib);
            for (size_t i = 0; i < n.grad.data.size(); ++i)
                ib.grad.data[i] += n.grad.data[i] * ia.value.data[i];
        }
    });
}

inline Var mul_const(const Var& a, Tensor weights) {
    check_same_shape(a.value(), weights, "mul_const");
    Tensor out = a.value();
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= weights.data[i];
    auto w = std::make_shared<Tensor>(std::move(weights));
    return make_op("mul_const", std::move(out), {a}, [w](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        for (size_t i = 0; i < n.grad.data.size(); ++i)
            in.grad.data[i] += n.grad.data[i] * w->data[i];
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (double& v : out.data) v *= s;
    return make_op("scale", std::move(out), {a}, [s](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        for (size_t i = 0; i < n.grad.data.size(); ++i) in.grad.data[i] += s * n.grad.data[i];
    });
}

inline Var relu(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_op("relu", std::move(out), {a}, [](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        for (size_t i = 0; i < n.grad.data.size(); ++i)
            if (in.value.data[i] > 0.0) in.grad.data[i] += n.grad.data[i];
    });
}

// |x| smoothed as sqrt(x^2 + eps^2); eps = 0 gives exact magnitude with the
// zero subgradient at the origin.
inline Var abs_smooth(const Var& a, double eps = 0.0) {
    Tensor out = a.value();
    const double e2 = eps * eps;
    for (double& v : out.data) v = std::sqrt(v * v + e2);
    return make_op("abs", std::move(out), {a}, [e2](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        for (size_t i = 0; i < n.grad.data.size(); ++i) {
            const double d = std::sqrt(in.value.data[i] * in.value.data[i] + e2);
            if (d > 0.0) in.grad.data[i] += n.grad.data[i] * in.value.data[i] / d;
        }
    });
}

inline Var sum(const Var& a) {
    Tensor out({1});
    for (double v : a.value().data) out.data[0] += v;
    return make_op("sum", std::move(out), {a}, [](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        const double g = n.grad.data[0];
        for (double& v : in.grad.data) v += g;
    });
}

inline Var mean(const Var& a) {
    Tensor out({1});
    for (double v : a.value().data) out.data[0] += v;
    const double inv = 1.0 / double(a.value().numel());
    out.data[0] *= inv;
    return make_op("mean", std::move(out), {a}, [inv](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        const double g = n.grad.data[0] * inv;
        for (double& v : in.grad.data) v += g;
    });
}

// Maximum entry; the subgradient routes to the first attaining index.
inline Var maxval(const Var& a) {
    Tensor out({1});
    size_t arg = 0;
    double m = a.value().data[0];
    for (size_t i = 1; i < a.value().data.size(); ++i)
        if (a.value().data[i] > m) {
            m = a.value().data[i];
            arg = i;
        }
    out.data[0] = m;
    return make_op("max", std::move(out), {a}, [arg](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        in.grad.data[arg] += n.grad.data[0];
    });
}

inline Var norm1(const Var& a) {
    Tensor out({1});
    for (double v : a.value().data) out.data[0] += std::abs(v);
    return make_op("norm1", std::move(out), {a}, [](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        const double g = n.grad.data[0];
        for (size_t i = 0; i < in.grad.data.size(); ++i) {
            const double x = in.value.data[i];
            in.grad.data[i] += g * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
    });
}

inline Var norm2(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data) s += v * v;
    Tensor out({1});
    out.data[0] = std::sqrt(s);
    return make_op("norm2", std::move(out), {a}, [](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        const double g = n.grad.data[0] / std::max(n.value.data[0], 1e-300);
        for (size_t i = 0; i < in.grad.data.size(); ++i)
            in.grad.data[i] += g * in.value.data[i];
    });
}

// Pointwise complex magnitude of a paired-channel tensor [2, ...] -> [...].
inline Var cmag(const Var& a) {
    const Tensor& t = a.value();
    if (t.shape.empty() || t.shape[0] != 2)
        throw DataError("cmag: expected leading channel pair, got " + t.shape_str());
    std::vector<int64_t> shp(t.shape.begin() + 1, t.shape.end());
    Tensor out(shp);
    const size_t n = out.data.size();
    for (size_t i = 0; i < n; ++i)
        out.data[i] = std::hypot(t.data[i], t.data[n + i]);
    return make_op("cmag", std::move(out), {a}, [n](Node& node) {
        Node& in = *node.inputs[0];
        ensure_grad(in);
        for (size_t i = 0; i < n; ++i) {
            const double m = std::max(node.value.data[i], 1e-300);
            const double g = node.grad.data[i] / m;
            in.grad.data[i] += g * in.value.data[i];
            in.grad.data[n + i] += g * in.value.data[n + i];
        }
    });
}

// ---- shape ops -------------------------------------------------------------

inline Var concat_ch(const std::vector<Var>& parts) {
    if (parts.empty()) throw DataError("concat_ch: no inputs");
    std::vector<int64_t> shp = parts[0].value().shape;
    int64_t ch = 0;
    for (const Var& p : parts) {
        if (std::vector<int64_t>(p.value().shape.begin() + 1, p.value().shape.end()) !=
            std::vector<int64_t>(shp.begin() + 1, shp.end()))
            throw DataError("concat_ch: trailing dimensions disagree");
        ch += p.value().shape[0];
    }
    shp[0] = ch;
    Tensor out(shp);
    size_t off = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + long(off));
        off += p.value().data.size();
    }
    return make_op("concat_ch", std::move(out), parts, [](Node& n) {
        size_t off2 = 0;
        for (auto& inp : n.inputs) {
            const size_t len = inp->value.data.size();
            if (inp->needs_grad) {
                ensure_grad(*inp);
                for (size_t i = 0; i < len; ++i) inp->grad.data[i] += n.grad.data[off2 + i];
            }
            off2 += len;
        }
    });
}

inline Var slice_ch(const Var& a, int64_t start, int64_t count) {
    const Tensor& t = a.value();
    if (start < 0 || count < 1 || start + count > t.shape[0])
        throw DataError("slice_ch: channel range out of bounds");
    std::vector<int64_t> shp = t.shape;
    shp[0] = count;
    const size_t stride = size_t(t.numel() / t.shape[0]);
    Tensor out(shp);
    std::copy(t.data.begin() + long(size_t(start) * stride),
              t.data.begin() + long(size_t(start + count) * stride), out.data.begin());
    return make_op("slice_ch", std::move(out), {a}, [start, stride](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        const size_t off = size_t(start) * stride;
        for (size_t i = 0; i < n.grad.data.size(); ++i) in.grad.data[off + i] += n.grad.data[i];
    });
}

// ---- 2-D convolution (stride 1, zero padding, same spatial size) -----------

inline Var conv2d(const Var& x, const Var& w, const Var& b) {
    const Tensor& xt = x.value();
    const Tensor& wt = w.value();
    const Tensor& bt = b.value();
    if (xt.shape.size() != 3 || wt.shape.size() != 4)
        throw DataError("conv2d: need x[C,H,W], w[O,C,kh,kw]; got " + xt.shape_str() + ", " +
                        wt.shape_str());
    const int64_t C = xt.shape[0], H = xt.shape[1], W = xt.shape[2];
    const int64_t O = wt.shape[0], kh = wt.shape[2], kw = wt.shape[3];
    if (wt.shape[1] != C)
        throw DataError("conv2d: channel mismatch " + xt.shape_str() + " vs " + wt.shape_str());
    if (bt.numel() != O) throw DataError("conv2d: bias size mismatch");
    if (kh % 2 == 0 || kw % 2 == 0) throw DataError("conv2d: kernel extents must be odd");
    const int64_t ph = kh / 2, pw = kw / 2;

    Tensor out({O, H, W});
    for (int64_t o = 0; o < O; ++o) {
        double* yo = out.data.data() + size_t(o * H * W);
        const double bias = bt.data[size_t(o)];
        for (int64_t i = 0; i < H * W; ++i) yo[i] = bias;
        for (int64_t c = 0; c < C; ++c) {
            const double* xc = xt.data.data() + size_t(c * H * W);
            const double* wc = wt.data.data() + size_t(((o * C) + c) * kh * kw);
            for (int64_t u = 0; u < kh; ++u) {
                const int64_t di = ph - u;
                for (int64_t v = 0; v < kw; ++v) {
                    const int64_t dj = pw - v;
                    const double wv = wc[u * kw + v];
                    if (wv == 0.0) continue;
                    const int64_t i0 = std::max<int64_t>(0, -di), i1 = std::min(H, H - di);
                    const int64_t j0 = std::max<int64_t>(0, -dj), j1 = std::min(W, W - dj);
                    for (int64_t i = i0; i < i1; ++i) {
                        const double* xr = xc + size_t((i + di) * W + dj);
                        double* yr = yo + size_t(i * W);
                        for (int64_t j = j0; j < j1; ++j) yr[j] += wv * xr[j];
                    }
                }
            }
        }
    }
    return make_op("conv2d", std::move(out), {x, w, b}, [C, H, W, O, kh, kw, ph, pw](Node& n) {
        Node& nx = *n.inputs[0];
        Node& nw = *n.inputs[1];
        Node& nb = *n.inputs[2];
        const Tensor& gy = n.grad;
        if (nb.needs_grad) {
            ensure_grad(nb);
            for (int64_t o = 0; o < O; ++o) {
                double s = 0.0;
                const double* g = gy.data.data() + size_t(o * H * W);
                for (int64_t i = 0; i < H * W; ++i) s += g[i];
                nb.grad.data[size_t(o)] += s;
            }
        }
        if (nw.needs_grad) {
            ensure_grad(nw);
            for (int64_t o = 0; o < O; ++o) {
                const double* g = gy.data.data() + size_t(o * H * W);
                for (int64_t c = 0; c < C; ++c) {
                    const double* xc = nx.value.data.data() + size_t(c * H * W);
                    double* gwc = nw.grad.data.data() + size_t(((o * C) + c) * kh * kw);
                    for (int64_t u = 0; u < kh; ++u) {
                        const int64_t di = ph - u;
                        for (int64_t v = 0; v < kw; ++v) {
                            const int64_t dj = pw - v;
                            const int64_t i0 = std::max<int64_t>(0, -di), i1 = std::min(H, H - di);
                            const int64_t j0 = std::max<int64_t>(0, -dj), j1 = std::min(W, W - dj);
                            double s = 0.0;
                            for (int64_t i = i0; i < i1; ++i) {
                                const double* xr = xc + size_t((i + di) * W + dj);
                                const double* gr = g + size_t(i * W);
                                for (int64_t j = j0; j < j1; ++j) s += gr[j] * xr[j];
                            }
                            gwc[u * kw + v] += s;
                        }
                    }
                }
            }
        }
        if (nx.needs_grad) {
            ensure_grad(nx);
            for (int64_t o = 0; o < O; ++o) {
                const double* g = gy.data.data() + size_t(o * H * W);
                for (int64_t c = 0; c < C; ++c) {
                    double* gx = nx.grad.data.data() + size_t(c * H * W);
                    const double* wc = nw.value.data.data() + size_t(((o * C) + c) * kh * kw);
                    for (int64_t u = 0; u < kh; ++u) {
                        const int64_t di = ph - u;
                        for (int64_t v = 0; v < kw; ++v) {
                            const int64_t dj = pw - v;
                            const double wv = wc[u * kw + v];
                            if (wv == 0.0) continue;
                            const int64_t i0 = std::max<int64_t>(0, -di), i1 = std::min(H, H - di);
                            const int64_t j0 = std::max<int64_t>(0, -dj), j1 = std::min(W, W - dj);
                            for (int64_t i = i0; i < i1; ++i) {
                                double* gxr = gx + size_t((i + di) * W + dj);
                                const double* gr = g + size_t(i * W);
                                for (int64_t j = j0; j < j1; ++j) gxr[j] += wv * gr[j];
                            }
                        }
                    }
                }
            }
        }
    });
}

// ---- linear image-domain ops -----------------------------------------------

// Orthonormal centered 2-D FFT on a paired-channel complex tensor; the
// backward pass is the inverse transform (unitary adjoint).
inline Var fft2c(const Var& a, bool inverse = false) {
    ComplexImage img = to_image(a.value());
    ComplexImage k = inverse ? centered_ifft(img) : centered_fft(img);
    return make_op(inverse ? "ifft2c" : "fft2c", to_tensor(k), {a}, [inverse](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        ComplexImage cot = to_image(n.grad);
        ComplexImage back = inverse ? centered_fft(cot) : centered_ifft(cot);
        Tensor t = to_tensor(back);
        for (size_t i = 0; i < t.data.size(); ++i) in.grad.data[i] += t.data[i];
    });
}

// Multiply a paired-channel image by a fixed complex map (coil weighting);
// the adjoint multiplies by the conjugate map.
inline Var cmul_const(const Var& a, std::shared_ptr<const ComplexImage> s) {
    ComplexImage img = to_image(a.value());
    check_same_shape(img, *s, "cmul_const");
    ComplexImage out(img.h, img.w);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = img.v[i] * s->v[i];
    return make_op("cmul_const", to_tensor(out), {a}, [s](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        ComplexImage cot = to_image(n.grad);
        for (size_t i = 0; i < cot.v.size(); ++i) cot.v[i] *= std::conj(s->v[i]);
        Tensor t = to_tensor(cot);
        for (size_t i = 0; i < t.data.size(); ++i) in.grad.data[i] += t.data[i];
    });
}

// Zero unsampled phase-encode rows (self-adjoint projection).
inline Var mask_rows(const Var& a, std::shared_ptr<const SamplingMask> mask) {
    const Tensor& t = a.value();
    if (t.shape.size() != 3 || t.shape[0] != 2 || t.shape[1] != mask->height())
        throw DataError("mask_rows: tensor " + t.shape_str() + " does not match mask height " +
                        std::to_string(mask->height()));
    const int64_t H = t.shape[1], W = t.shape[2];
    Tensor out = t;
    for (int ch = 0; ch < 2; ++ch)
        for (int64_t r = 0; r < H; ++r)
            if (!mask->line(int(r)))
                for (int64_t c = 0; c < W; ++c) out.data[size_t((ch * H + r) * W + c)] = 0.0;
    return make_op("mask_rows", std::move(out), {a}, [mask, H, W](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        for (int ch = 0; ch < 2; ++ch)
            for (int64_t r = 0; r < H; ++r)
                if (mask->line(int(r)))
                    for (int64_t c = 0; c < W; ++c) {
                        const size_t i = size_t((ch * H + r) * W + c);
                        in.grad.data[i] += n.grad.data[i];
                    }
    });
}

// Grid symmetries used by transformation-equivariance losses.
enum class GridTransform { Rot90, Rot180, Rot270, FlipH, FlipV };

inline Var grid_transform(const Var& a, GridTransform g) {
    const Tensor& t = a.value();
    if (t.shape.size() != 3 || t.shape[0] != 2)
        throw DataError("grid_transform: expected [2,H,W]");
    const int64_t H = t.shape[1], W = t.shape[2];
    if ((g == GridTransform::Rot90 || g == GridTransform::Rot270) && H != W)
        throw DataError("grid_transform: quarter rotations need a square grid");
    auto src_of = [g, H, W](int64_t r, int64_t c) -> std::pair<int64_t, int64_t> {
        switch (g) {
            case GridTransform::Rot90: return {c, H - 1 - r};
            case GridTransform::Rot180: return {H - 1 - r, W - 1 - c};
            case GridTransform::Rot270: return {W - 1 - c, r};
            case GridTransform::FlipH: return {r, W - 1 - c};
            case GridTransform::FlipV: return {H - 1 - r, c};
        }
        return {r, c};
    };
    Tensor out(t.shape);
    for (int ch = 0; ch < 2; ++ch)
        for (int64_t r = 0; r < H; ++r)
            for (int64_t c = 0; c < W; ++c) {
                auto [sr, sc] = src_of(r, c);
                out.data[size_t((ch * H + r) * W + c)] = t.data[size_t((ch * H + sr) * W + sc)];
            }
    return make_op("grid_transform", std::move(out), {a}, [src_of, H, W](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        for (int ch = 0; ch < 2; ++ch)
            for (int64_t r = 0; r < H; ++r)
                for (int64_t c = 0; c < W; ++c) {
                    auto [sr, sc] = src_of(r, c);
                    in.grad.data[size_t((ch * H + sr) * W + sc)] +=
                        n.grad.data[size_t((ch * H + r) * W + c)];
                }
    });
}

// ---- domain composites -----------------------------------------------------

// Paired-channel view of multi-coil k-space: [2, nc, H, W].
inline Tensor kspace_to_tensor(const KSpaceData& y) {
    Tensor out({2, y.nc, y.h, y.w});
    const size_t plane = size_t(y.h) * size_t(y.w);
    const size_t half = size_t(y.nc) * plane;
    for (int c = 0; c < y.nc; ++c)
        for (size_t i = 0; i < plane; ++i) {
            out.data[size_t(c) * plane + i] = y.coils[size_t(c)].v[i].real();
            out.data[half + size_t(c) * plane + i] = y.coils[size_t(c)].v[i].imag();
        }
    return out;
}

inline KSpaceData tensor_to_kspace(const Tensor& t, const SamplingMask& mask) {
    if (t.shape.size() != 4 || t.shape[0] != 2)
        throw DataError("tensor_to_kspace: expected [2,nc,H,W], got " + t.shape_str());
    KSpaceData y(int(t.shape[1]), int(t.shape[2]), int(t.shape[3]), mask);
    const size_t plane = size_t(y.h) * size_t(y.w);
    const size_t half = size_t(y.nc) * plane;
    for (int c = 0; c < y.nc; ++c)
        for (size_t i = 0; i < plane; ++i)
            y.coils[size_t(c)].v[i] =
                Complex(t.data[size_t(c) * plane + i], t.data[half + size_t(c) * plane + i]);
    return y;
}

// Full multi-coil encoding E applied in-graph: [2,H,W] -> [2,nc,H,W].
inline Var encode_apply(const Var& x, std::shared_ptr<const EncodingOperator> enc) {
    ComplexImage img = to_image(x.value());
    return make_op("encode_apply", kspace_to_tensor(enc->apply(img)), {x}, [enc](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        KSpaceData cot = tensor_to_kspace(n.grad, enc->mask());
        Tensor t = to_tensor(enc->adjoint(cot));
        for (size_t i = 0; i < t.data.size(); ++i) in.grad.data[i] += t.data[i];
    });
}

// E^H E applied in-graph (self-adjoint): [2,H,W] -> [2,H,W].
inline Var encode_normal(const Var& x, std::shared_ptr<const EncodingOperator> enc) {
    ComplexImage img = to_image(x.value());
    return make_op("encode_normal", to_tensor(enc->normal(img)), {x}, [enc](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        Tensor t = to_tensor(enc->normal(to_image(n.grad)));
        for (size_t i = 0; i < t.data.size(); ++i) in.grad.data[i] += t.data[i];
    });
}

// Analysis side of the wavelet transform as one linear node producing the
// paired-channel coefficient vector [2, N]; the backward pass applies the
// exact adjoint.
inline Var dtcwt_forward(const Var& x, std::shared_ptr<const Dtcwt> wt) {
    ComplexImage img = to_image(x.value());
    std::vector<Complex> coeffs = wt->forward(img);
    Tensor out({2, int64_t(coeffs.size())});
    for (size_t i = 0; i < coeffs.size(); ++i) {
        out.data[i] = coeffs[i].real();
        out.data[coeffs.size() + i] = coeffs[i].imag();
    }
    return make_op("dtcwt", std::move(out), {x}, [wt](Node& n) {
        Node& in = *n.inputs[0];
        ensure_grad(in);
        const size_t nc = n.value.data.size() / 2;
        std::vector<Complex> cot(nc);
        for (size_t i = 0; i < nc; ++i) cot[i] = Complex(n.grad.data[i], n.grad.data[nc + i]);
        Tensor t = to_tensor(wt->adjoint(cot));
        for (size_t i = 0; i < t.data.size(); ++i) in.grad.data[i] += t.data[i];
    });
}

// Data-fidelity block solved implicitly: value = (E^H E + mu I)^{-1}(rhs + mu z)
// by CG; the cotangent is propagated through one more CG solve instead of an
// unrolled iteration graph. rhs may be a traced input (its Jacobian is the
// plain resolvent) or a constant. When mu_var is supplied, mu is read from it
// and receives a gradient (d x / d mu = A^{-1}(z - x)).
inline Var df_block(const Var& z, const Var& rhs, std::shared_ptr<const EncodingOperator> enc,
                    double mu, const CgConfig& cfg, const Var& mu_var = {}) {
    if (mu_var.defined()) mu = mu_var.value().data[0];
    if (mu <= 0.0) throw DataError("df_block: mu must be positive");
    ComplexImage zi = to_image(z.value());
    ComplexImage ri = to_image(rhs.value());
    ComplexImage x = df_solve(zi, ri, *enc, mu, cfg);
    Tensor xt = to_tensor(x);
    std::vector<Var> inputs = {z, rhs};
    if (mu_var.defined()) inputs.push_back(mu_var);
    return make_op("df_block", std::move(xt), std::move(inputs), [enc, mu, cfg](Node& n) {
        ComplexImage cot = to_image(n.grad);
        auto A = [&](const ComplexImage& v) {
            ComplexImage out = enc->normal(v);
            axpy(Complex(mu, 0), v, out);
            return out;
        };
        CgResult q = cg_solve(A, cot, cfg); // q.x = (E^H E + mu I)^{-1} cotangent
        Node& nz = *n.inputs[0];
        Node& nr = *n.inputs[1];
        if (nz.needs_grad) {
            ensure_grad(nz);
            Tensor t = to_tensor(mu * q.x);
            for (size_t i = 0; i < t.data.size(); ++i) nz.grad.data[i] += t.data[i];
        }
        if (nr.needs_grad) {
            ensure_grad(nr);
            Tensor t = to_tensor(q.x);
            for (size_t i = 0; i < t.data.size(); ++i) nr.grad.data[i] += t.data[i];
        }
        if (n.inputs.size() == 3 && n.inputs[2]->needs_grad) {
            Node& nm = *n.inputs[2];
            ensure_grad(nm);
            ComplexImage zmx = to_image(nz.value);
            ComplexImage xv = to_image(n.value);
            for (size_t i = 0; i < zmx.v.size(); ++i) zmx.v[i] -= xv.v[i];
            nm.grad.data[0] += std::real(dot(q.x, zmx));
        }
    });
}

} // namespace ad
} // namespace cupid
