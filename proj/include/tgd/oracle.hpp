#pragma once

#include <cstddef>
#include <vector>

#include "tgd/math.hpp"
#include "tgd/observation.hpp"
#include "tgd/prior.hpp"
#include "tgd/rng.hpp"

namespace tgd {

// Exact posterior for a Gaussian-mixture prior observed through the
// elementwise absolute value with Gaussian noise. Conditional on the mixture
// component and the sign pattern of x0, the posterior factorizes per
// coordinate into truncated Gaussians, so the whole posterior is a finite
// mixture over (component, sign branch) pairs that can be normalized and
// sampled exactly.
struct SignBranchPosterior {
    std::size_t dim = 0;
    double sd = 0.0;           // shared per-coordinate posterior std (both branches)
    double log_evidence = 0.0; // log of the prior-likelihood integral

    std::vector<double> log_comp_w;  // K, normalized over components
    // Row-major [k * dim + j]:
    std::vector<double> pos_mean, neg_mean;  // branch posterior means
    std::vector<double> log_pos_prob;        // log P(branch = positive | component)

    // Inputs kept for density evaluation.
    std::vector<Vec> prior_means;
    std::vector<double> log_prior_w;
    double prior_var = 0.0;
    Vec y;
    double sigma_eff = 0.0;

    std::size_t components() const noexcept { return log_comp_w.size(); }
};

// sigma_eff is the effective observation noise; tempering by lambda enters as
// sigma_y / sqrt(lambda).
SignBranchPosterior build_sign_branch_posterior(const GaussianMixturePrior& prior,
                                                const Vec& y, double sigma_eff);

Vec sample(const SignBranchPosterior& post, RngStream& rng);

std::vector<Vec> sample_many(const SignBranchPosterior& post, std::size_t n, RngStream& rng);

// Normalized posterior log density at x.
double log_pdf(const SignBranchPosterior& post, const Vec& x);

// Sample of N(mean, sd^2) conditioned on x >= lower. Inverse-CDF on the
// complementary tail for moderate truncation, exponential rejection
// (Robert 1995) when the standardized bound exceeds 8; both exact.
double truncated_normal_lower(double mean, double sd, double lower, RngStream& rng);

// Unnormalized tempered posterior log p(x0) + lambda * log p(y | x0) tabulated
// on a uniform square grid over [lo, hi]^2. Requires prior.dim == 2.
struct PosteriorGrid {
    double lo = 0.0, hi = 0.0;
    std::size_t n = 0;
    std::vector<double> log_density;  // [i * n + j] at (x(i), x(j))

    double x(std::size_t i) const {
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    double step() const { return (hi - lo) / static_cast<double>(n - 1); }
};

PosteriorGrid tempered_posterior_grid(const GaussianMixturePrior& prior,
                                      const Observation& obs, double lambda,
                                      double lo, double hi, std::size_t n);

// log of the Riemann mass sum(exp(log_density)) * step^2.
double grid_log_mass(const PosteriorGrid& g);

// Mean of the normalized grid measure.
Vec grid_mean(const PosteriorGrid& g);

// Brute-force sampleable posterior: piecewise-uniform measure on an adaptively
// refined square grid. Cells carrying non-negligible mass are subdivided
// refine x refine so the in-cell uniform jitter stays far below the Monte
// Carlo resolution of the sample sizes this oracle is compared at; empty
// regions stay coarse. Independent of the sign-branch construction, so the
// two can cross-validate each other.
struct GridDistribution {
    double lo = 0.0, hi = 0.0;
    std::size_t base_n = 0;   // coarse resolution per axis
    std::size_t refine = 1;   // subdivision factor for heavy cells
    std::vector<double> cx, cy;    // leaf centers
    std::vector<double> half;      // leaf half-widths (leaves are squares)
    std::vector<double> mass;      // normalized leaf masses
    std::vector<double> cdf;       // inclusive prefix sums of mass
    std::size_t leaves() const noexcept { return mass.size(); }
};

// Tabulates log p(x0) + log p(y|x0) at cell centers over [lo, hi]^2 and
// refines every coarse cell whose relative mass exceeds 1e-16 of the peak.
// Throws if the boundary ring carries more than 1e-6 of the mass (box too
// small). Requires prior.dim == 2.
GridDistribution grid_posterior(const GaussianMixturePrior& prior, const Observation& obs,
                                double lo, double hi, std::size_t n, std::size_t refine);

// Leaf by inverse CDF, then uniform jitter inside the leaf. Consumes exactly
// three uniforms per draw.
Vec sample(const GridDistribution& g, RngStream& rng);

std::vector<Vec> sample_many(const GridDistribution& g, std::size_t n, RngStream& rng);

// Total mass of leaves whose center lies in the quadrant selected by the
// signs of q (q[j] >= 0 selects x[j] >= 0). Used to cross-check sign-branch
// masses against the grid.
double grid_quadrant_mass(const GridDistribution& g, const Vec& q);

}  // namespace tgd
