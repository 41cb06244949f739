#pragma once

#include <cstddef>
#include <vector>

namespace tgd {

// Outer noise grid, stored in sampling order: levels[0] = s_max down to
// levels.back() = s_min. Stage indices count the other way (stage R is the
// start of sampling, stage 0 the end), so stage r lives at levels[R - r].
struct NoiseSchedule {
    std::vector<double> levels;
    double curvature = 0.0;

    std::size_t stage_count() const noexcept {  // R
        return levels.empty() ? 0 : levels.size() - 1;
    }
    double at_stage(std::size_t r) const { return levels.at(levels.size() - 1 - r); }
    double s_max() const { return levels.front(); }
    double s_min() const { return levels.back(); }
};

// Likelihood exponents aligned with a NoiseSchedule: exponents[i] pairs with
// levels[i], so exponents[0] = lambda_R and exponents.back() = lambda_0 = 1.
struct TemperingSchedule {
    std::vector<double> exponents;

    std::size_t stage_count() const noexcept {
        return exponents.empty() ? 0 : exponents.size() - 1;
    }
    double at_stage(std::size_t r) const {
        return exponents.at(exponents.size() - 1 - r);
    }
};

// Geometric-family grid interpolating s_max^(1/curvature) .. s_min^(1/curvature)
// linearly and raising back to the curvature power. Endpoints are patched to
// the requested bounds exactly. n_points = 1 collapses to {s_max}.
NoiseSchedule edm_noise_grid(std::size_t n_points, double s_max, double s_min,
                             double curvature);

// lambda_r = lambda_start + ((R - r) / R) * (1 - lambda_start); the terminal
// exponent is pinned to exactly 1. R = 0 gives the single exponent {1}.
TemperingSchedule uniform_tempering(std::size_t stages, double lambda_start);

// lambda_r = lambda_start + (1 - lambda_start) * ((s_R - s_r) / s_R)^alpha,
// tracking how much of the total noise decay has happened; terminal exponent
// pinned to exactly 1.
TemperingSchedule noise_dependent_tempering(const NoiseSchedule& noise,
                                            double lambda_start, double alpha);

void validate(const NoiseSchedule& s);
void validate(const TemperingSchedule& s);

}  // namespace tgd
