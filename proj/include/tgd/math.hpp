#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace tgd {

using Vec = std::vector<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kSqrt2 = 1.4142135623730950488;

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_norm(const Vec& a) { return dot(a, a); }

inline double norm(const Vec& a) { return std::sqrt(squared_norm(a)); }

inline double squared_distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline bool all_finite(const Vec& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

// log(sum_i exp(v_i)); empty or all -inf input yields -inf.
double logsumexp(std::span<const double> v);

// log(exp(a) + exp(b))
inline double log_add(double a, double b) {
    if (a < b) std::swap(a, b);
    if (!std::isfinite(a)) return a;
    return a + std::log1p(std::exp(b - a));
}

// In-place normalization of log weights so logsumexp(v) == 0.
// Returns the subtracted constant. Throws std::runtime_error when the
// total mass is zero or non-finite.
double normalize_log_weights(std::span<double> v);

inline double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (kLog2Pi + std::log(var)) - d * d / (2.0 * var);
}

// Isotropic d-dimensional Gaussian with per-coordinate variance `var`.
inline double log_isotropic_normal_pdf(const Vec& x, const Vec& mean, double var) {
    const double d = static_cast<double>(x.size());
    return -0.5 * d * (kLog2Pi + std::log(var)) - squared_distance(x, mean) / (2.0 * var);
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

inline double norm_sf(double x) { return 0.5 * std::erfc(x / kSqrt2); }

// log(Phi(x)), accurate into the deep lower tail where Phi(x) underflows.
double log_norm_cdf(double x);

inline double log_norm_sf(double x) { return log_norm_cdf(-x); }

// Inverse standard normal CDF (Wichura's PPND16 rational approximation,
// relative error below 1e-15 over (0, 1)). p outside (0, 1) yields +-inf/NaN
// per the usual conventions.
double norm_quantile(double p);

}  // namespace tgd
