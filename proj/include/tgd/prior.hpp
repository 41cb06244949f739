#pragma once

#include <cstddef>
#include <vector>

#include "tgd/math.hpp"
#include "tgd/rng.hpp"

namespace tgd {

// Isotropic Gaussian mixture: K components with shared per-coordinate
// standard deviation tau and normalized weights.
struct GaussianMixturePrior {
    std::size_t dim = 0;
    std::vector<double> weights;
    std::vector<Vec> means;
    double tau = 0.0;
    std::vector<double> log_weights;  // optional cache, filled by make_mixture

    std::size_t components() const noexcept { return weights.size(); }
};

GaussianMixturePrior make_mixture(std::size_t dim, std::vector<double> weights,
                                  std::vector<Vec> means, double tau);

// Component means drawn uniformly from [-(1 - margin), 1 - margin]^dim.
std::vector<Vec> sample_prior_means(std::size_t dim, std::size_t components,
                                    double margin, RngStream& rng);

// The prior convolved with N(0, s^2 I): same mixture with per-coordinate
// variance tau^2 + s^2. Holds a pointer into the prior; the prior must
// outlive it.
struct NoisedMixture {
    const GaussianMixturePrior* prior = nullptr;
    double var = 0.0;  // tau^2 + s^2

    std::size_t dim() const noexcept { return prior->dim; }
    std::size_t components() const noexcept { return prior->components(); }
};

NoisedMixture noised(const GaussianMixturePrior& prior, double s);

double log_pdf(const NoisedMixture& m, const Vec& x);

// Clean prior density: the s = 0 noised mixture.
double log_pdf(const GaussianMixturePrior& prior, const Vec& x);

// grad_x log p_s(x).
void score_into(const NoisedMixture& m, const Vec& x, Vec& out);
Vec score(const NoisedMixture& m, const Vec& x);

// Posterior mean E[x0 | x_s = x] = x + s^2 * score (exact for this prior).
void denoised_mean_into(const GaussianMixturePrior& prior, const Vec& x, double s, Vec& out);
Vec denoised_mean(const GaussianMixturePrior& prior, const Vec& x, double s);

// out = J(x, s)^T v where J is the Jacobian of the posterior mean in x.
// J = I + s^2 H with H the Hessian of log p_s; symmetric, so J^T = J.
void denoiser_jacobian_vec(const GaussianMixturePrior& prior, const Vec& x, double s,
                           const Vec& v, Vec& out);

// z = x0 + s * eps, eps ~ N(0, I). s = 0 copies x0.
void forward_noise_into(const Vec& x0, double s, RngStream& rng, Vec& out);
Vec forward_noise(const Vec& x0, double s, RngStream& rng);

// Exact conditional p(x0 | x_s = z): a mixture with component variance
// v = (1/tau^2 + 1/s^2)^-1, means v * (mu_k / tau^2 + z / s^2), and weights
// proportional to w_k * N(z; mu_k, (tau^2 + s^2) I).
GaussianMixturePrior posterior_mixture_given_z(const GaussianMixturePrior& prior,
                                               const Vec& z, double s);

Vec sample(const GaussianMixturePrior& prior, RngStream& rng);
Vec sample(const NoisedMixture& m, RngStream& rng);

// Index drawn from normalized weights by inverse-CDF walk.
std::size_t sample_categorical(const std::vector<double>& weights, RngStream& rng);

}  // namespace tgd
