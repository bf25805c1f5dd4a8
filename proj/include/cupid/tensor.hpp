#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "cupid/common.hpp"

namespace cupid {

// Dense row-major real tensor. The autodiff layer stores complex quantities
// as a leading channel pair (index 0 = real, 1 = imaginary).
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(size_t(numel(shape)), 0.0);
    }
    Tensor(std::vector<int64_t> s, double fill) : shape(std::move(s)) {
        data.assign(size_t(numel(shape)), fill);
    }

    static int64_t numel(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t e : s) n *= e;
        return n;
    }

    int64_t numel() const { return int64_t(data.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& at(std::initializer_list<int64_t> idx) { return data[size_t(offset(idx))]; }
    double at(std::initializer_list<int64_t> idx) const { return data[size_t(offset(idx))]; }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        int64_t off = 0;
        size_t d = 0;
        for (int64_t i : idx) {
            off = off * shape[d] + i;
            ++d;
        }
        return off;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << "]";
        return os.str();
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DataError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                        b.shape_str());
    }
}

inline double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

} // namespace cupid
