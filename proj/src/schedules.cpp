#include "tgd/schedules.hpp"

#include <cmath>
#include <stdexcept>

namespace tgd {

NoiseSchedule edm_noise_grid(std::size_t n_points, double s_max, double s_min,
                             double curvature) {
    if (n_points == 0) throw std::invalid_argument("edm_noise_grid: n_points must be >= 1");
    if (!(s_min > 0.0) || !(s_max > 0.0))
        throw std::invalid_argument("edm_noise_grid: noise levels must be positive");
    if (s_min > s_max) throw std::invalid_argument("edm_noise_grid: s_min exceeds s_max");
    if (!(curvature > 0.0)) throw std::invalid_argument("edm_noise_grid: curvature must be positive");

    NoiseSchedule out;
    out.curvature = curvature;
    out.levels.resize(n_points);
    if (n_points == 1) {
        out.levels[0] = s_max;
        return out;
    }
    const double inv = 1.0 / curvature;
    const double hi = std::pow(s_max, inv);
    const double lo = std::pow(s_min, inv);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(n_points - 1);
        out.levels[i] = std::pow(hi + f * (lo - hi), curvature);
    }
    out.levels.front() = s_max;
    out.levels.back() = s_min;
    validate(out);
    return out;
}

TemperingSchedule uniform_tempering(std::size_t stages, double lambda_start) {
    if (!(lambda_start >= 0.0 && lambda_start <= 1.0))
        throw std::invalid_argument("uniform_tempering: lambda_start must lie in [0, 1]");
    TemperingSchedule out;
    out.exponents.resize(stages + 1);
    for (std::size_t i = 0; i <= stages; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(stages == 0 ? 1 : stages);
        out.exponents[i] = lambda_start + f * (1.0 - lambda_start);
    }
    out.exponents.back() = 1.0;
    validate(out);
    return out;
}

TemperingSchedule noise_dependent_tempering(const NoiseSchedule& noise,
                                            double lambda_start, double alpha) {
    validate(noise);
    if (!(lambda_start >= 0.0 && lambda_start <= 1.0))
        throw std::invalid_argument("noise_dependent_tempering: lambda_start must lie in [0, 1]");
    if (!(alpha > 0.0))
        throw std::invalid_argument("noise_dependent_tempering: alpha must be positive");
    const double top = noise.levels.front();
    TemperingSchedule out;
    out.exponents.resize(noise.levels.size());
    for (std::size_t i = 0; i < noise.levels.size(); ++i) {
        const double progress = (top - noise.levels[i]) / top;
        out.exponents[i] = lambda_start + (1.0 - lambda_start) * std::pow(progress, alpha);
    }
    out.exponents.back() = 1.0;
    validate(out);
    return out;
}

void validate(const NoiseSchedule& s) {
    if (s.levels.empty()) throw std::invalid_argument("NoiseSchedule: empty grid");
    for (double v : s.levels)
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("NoiseSchedule: levels must be positive and finite");
    const bool flat = s.levels.front() == s.levels.back();
    for (std::size_t i = 1; i < s.levels.size(); ++i) {
        if (flat ? s.levels[i] > s.levels[i - 1] : s.levels[i] >= s.levels[i - 1])
            throw std::invalid_argument("NoiseSchedule: levels must decrease in sampling order");
    }
}

void validate(const TemperingSchedule& s) {
    if (s.exponents.empty()) throw std::invalid_argument("TemperingSchedule: empty");
    for (double v : s.exponents)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("TemperingSchedule: exponents must lie in [0, 1]");
    for (std::size_t i = 1; i < s.exponents.size(); ++i)
        if (s.exponents[i] < s.exponents[i - 1])
            throw std::invalid_argument(
                "TemperingSchedule: exponents must be non-decreasing toward the terminal stage");
    if (s.exponents.back() != 1.0)
        throw std::invalid_argument("TemperingSchedule: terminal exponent must equal 1");
}

}  // namespace tgd
