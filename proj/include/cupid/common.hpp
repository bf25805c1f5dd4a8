#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace cupid {

using Complex = std::complex<double>;

// Malformed or inconsistent inputs (shapes, file contents, bad configs).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical breakdown at runtime (divergence, non-finite values).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double pi = 3.14159265358979323846;

} // namespace cupid
