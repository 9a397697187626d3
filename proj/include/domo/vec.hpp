#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace domo {

// Flat model state of fixed dimension d. All optimizer arithmetic runs on
// these; reductions are sequential left-to-right so results do not depend
// on thread scheduling.
using Vec = std::vector<double>;

namespace vec {

inline Vec zeros(std::size_t d) { return Vec(d, 0.0); }

inline void require_same_size(const Vec& a, const Vec& b, const char* where) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
}

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
    require_same_size(x, y, "axpy");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline void scale(Vec& x, double a) {
    for (double& v : x) v *= a;
}

inline void add(Vec& y, const Vec& x) {
    require_same_size(x, y, "add");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

inline void sub(Vec& y, const Vec& x) {
    require_same_size(x, y, "sub");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= x[i];
}

inline double dot(const Vec& a, const Vec& b) {
    require_same_size(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

inline double squared_norm(const Vec& a) { return squared_norm(std::span<const double>(a)); }

inline double norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

inline bool all_finite(const Vec& a) { return all_finite(std::span<const double>(a)); }

inline void require_finite(const Vec& a, const char* where) {
    if (!all_finite(a))
        throw std::runtime_error(std::string(where) + ": non-finite value in parameter vector");
}

// Pairwise left-to-right tree sum (consumes the scratch buffer). Used for
// all across-client aggregation: the result is independent of scheduling and
// exact when every entry is identical and the count is a power of two.
inline double pairwise_sum(std::span<double> scratch) {
    std::size_t n = scratch.size();
    while (n > 1) {
        const std::size_t half = n / 2;
        for (std::size_t i = 0; i < half; ++i) scratch[i] = scratch[2 * i] + scratch[2 * i + 1];
        if (n % 2) {
            scratch[half] = scratch[n - 1];
            n = half + 1;
        } else {
            n = half;
        }
    }
    return n == 0 ? 0.0 : scratch[0];
}

}  // namespace vec
}  // namespace domo
