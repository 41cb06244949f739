#pragma once

#include <cstddef>
#include <vector>

#include "tgd/math.hpp"
#include "tgd/rng.hpp"

namespace tgd {

// Point cloud with optional weights (empty = uniform).
struct SampleSet {
    std::vector<Vec> points;
    std::vector<double> weights;
};

// p-Wasserstein distance between two equal-size empirical measures on the
// line: order-statistic matching on pre-sorted inputs.
double wasserstein_1d(const std::vector<double>& a_sorted,
                      const std::vector<double>& b_sorted, int order);

// Unit projection directions: normalized standard Gaussian draws.
std::vector<Vec> projection_directions(std::size_t count, std::size_t dim, RngStream& rng);

// Max (resp. mean) over the given directions of the 1-d distance between the
// projected sets. Weighted or unequal-size inputs are reduced to equal-size
// uniform clouds first (weighted systematic resampling / uniform subsampling
// of the larger set) using `rng`; equal-size uniform inputs consume no
// randomness, so fixed directions give a fully deterministic metric.
double max_sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                              const std::vector<Vec>& directions, int order, RngStream& rng);
double mean_sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                               const std::vector<Vec>& directions, int order, RngStream& rng);

// Convenience: draws `n_projections` directions from `rng`, then evaluates.
double max_sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                              std::size_t n_projections, int order, RngStream& rng);

// Both reductions over one pass of shared projections.
struct SlicedDistances {
    double max = 0.0;
    double mean = 0.0;
};
SlicedDistances sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                                   const std::vector<Vec>& directions, int order,
                                   RngStream& rng);

}  // namespace tgd
