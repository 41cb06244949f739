#include "tgd/prior.hpp"

#include <cmath>
#include <stdexcept>

namespace tgd {

namespace {

constexpr double kWeightSumTol = 1e-9;

// Component log responsibilities at x under the noised mixture; returns the
// normalizing constant log p_s(x). Scratch lives per thread so the per-particle
// hot path does not allocate.
thread_local std::vector<double> tl_logr;

double log_weight(const GaussianMixturePrior& p, std::size_t k) {
    return p.log_weights.empty() ? std::log(p.weights[k]) : p.log_weights[k];
}

double log_responsibilities(const NoisedMixture& m, const Vec& x) {
    const auto& p = *m.prior;
    tl_logr.resize(p.components());
    for (std::size_t k = 0; k < p.components(); ++k)
        tl_logr[k] = log_weight(p, k) + log_isotropic_normal_pdf(x, p.means[k], m.var);
    const double lse = logsumexp(tl_logr);
    for (double& v : tl_logr) v = std::exp(v - lse);
    return lse;
}

}  // namespace

GaussianMixturePrior make_mixture(std::size_t dim, std::vector<double> weights,
                                  std::vector<Vec> means, double tau) {
    if (dim == 0) throw std::invalid_argument("make_mixture: dim must be >= 1");
    if (weights.empty() || weights.size() != means.size())
        throw std::invalid_argument("make_mixture: weights and means must be nonempty and aligned");
    if (!(tau > 0.0)) throw std::invalid_argument("make_mixture: tau must be positive");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw std::invalid_argument("make_mixture: weights must be positive");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > kWeightSumTol)
        throw std::invalid_argument("make_mixture: weights must sum to 1");
    for (double& w : weights) w /= sum;
    for (const auto& mu : means)
        if (mu.size() != dim) throw std::invalid_argument("make_mixture: mean dimension mismatch");
    GaussianMixturePrior p{dim, std::move(weights), std::move(means), tau, {}};
    p.log_weights.resize(p.weights.size());
    for (std::size_t k = 0; k < p.weights.size(); ++k) p.log_weights[k] = std::log(p.weights[k]);
    return p;
}

std::vector<Vec> sample_prior_means(std::size_t dim, std::size_t components,
                                    double margin, RngStream& rng) {
    if (!(margin >= 0.0 && margin < 1.0))
        throw std::invalid_argument("sample_prior_means: margin must lie in [0, 1)");
    const double b = 1.0 - margin;
    std::vector<Vec> means(components, Vec(dim));
    for (auto& mu : means)
        for (double& c : mu) c = rng.uniform(-b, b);
    return means;
}

NoisedMixture noised(const GaussianMixturePrior& prior, double s) {
    if (!(s >= 0.0)) throw std::invalid_argument("noised: s must be >= 0");
    return NoisedMixture{&prior, prior.tau * prior.tau + s * s};
}

double log_pdf(const NoisedMixture& m, const Vec& x) {
    const auto& p = *m.prior;
    if (x.size() != p.dim) throw std::invalid_argument("log_pdf: dimension mismatch");
    tl_logr.resize(p.components());
    for (std::size_t k = 0; k < p.components(); ++k)
        tl_logr[k] = log_weight(p, k) + log_isotropic_normal_pdf(x, p.means[k], m.var);
    return logsumexp(tl_logr);
}

double log_pdf(const GaussianMixturePrior& prior, const Vec& x) {
    return log_pdf(noised(prior, 0.0), x);
}

void score_into(const NoisedMixture& m, const Vec& x, Vec& out) {
    const auto& p = *m.prior;
    if (x.size() != p.dim) throw std::invalid_argument("score_into: dimension mismatch");
    log_responsibilities(m, x);
    out.assign(p.dim, 0.0);
    for (std::size_t k = 0; k < p.components(); ++k) {
        const double r = tl_logr[k];
        const auto& mu = p.means[k];
        for (std::size_t j = 0; j < p.dim; ++j) out[j] += r * (mu[j] - x[j]);
    }
    for (double& v : out) v /= m.var;
}

Vec score(const NoisedMixture& m, const Vec& x) {
    Vec out;
    score_into(m, x, out);
    return out;
}

void denoised_mean_into(const GaussianMixturePrior& prior, const Vec& x, double s, Vec& out) {
    score_into(noised(prior, s), x, out);
    const double s2 = s * s;
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] + s2 * out[j];
}

Vec denoised_mean(const GaussianMixturePrior& prior, const Vec& x, double s) {
    Vec out;
    denoised_mean_into(prior, x, s, out);
    return out;
}

void denoiser_jacobian_vec(const GaussianMixturePrior& prior, const Vec& x, double s,
                           const Vec& v, Vec& out) {
    if (x.size() != prior.dim || v.size() != prior.dim)
        throw std::invalid_argument("denoiser_jacobian_vec: dimension mismatch");
    const NoisedMixture m = noised(prior, s);
    log_responsibilities(m, x);
    // H v = -v / var + sum_k r_k g_k (g_k . v) - g (g . v), g_k = (mu_k - x) / var
    out.assign(prior.dim, 0.0);
    Vec g(prior.dim, 0.0);
    double gv = 0.0;
    for (std::size_t k = 0; k < prior.components(); ++k) {
        const double r = tl_logr[k];
        const auto& mu = prior.means[k];
        double gkv = 0.0;
        for (std::size_t j = 0; j < prior.dim; ++j) gkv += (mu[j] - x[j]) / m.var * v[j];
        gv += r * gkv;
        for (std::size_t j = 0; j < prior.dim; ++j) {
            const double gkj = (mu[j] - x[j]) / m.var;
            out[j] += r * gkj * gkv;
            g[j] += r * gkj;
        }
    }
    const double s2 = s * s;
    for (std::size_t j = 0; j < prior.dim; ++j) {
        const double hv = -v[j] / m.var + out[j] - g[j] * gv;
        out[j] = v[j] + s2 * hv;
    }
}

void forward_noise_into(const Vec& x0, double s, RngStream& rng, Vec& out) {
    if (!(s >= 0.0)) throw std::invalid_argument("forward_noise: s must be >= 0");
    out.resize(x0.size());
    if (s == 0.0) {
        out = x0;
        return;
    }
    for (std::size_t j = 0; j < x0.size(); ++j) out[j] = x0[j] + s * rng.normal();
}

Vec forward_noise(const Vec& x0, double s, RngStream& rng) {
    Vec out;
    forward_noise_into(x0, s, rng, out);
    return out;
}

GaussianMixturePrior posterior_mixture_given_z(const GaussianMixturePrior& prior,
                                               const Vec& z, double s) {
    if (!(s > 0.0)) throw std::invalid_argument("posterior_mixture_given_z: s must be positive");
    if (z.size() != prior.dim)
        throw std::invalid_argument("posterior_mixture_given_z: dimension mismatch");
    const double tau2 = prior.tau * prior.tau;
    const double s2 = s * s;
    const double marg_var = tau2 + s2;
    const double v = tau2 * s2 / marg_var;

    GaussianMixturePrior post;
    post.dim = prior.dim;
    post.tau = std::sqrt(v);
    post.means.resize(prior.components(), Vec(prior.dim));
    std::vector<double> logw(prior.components());
    for (std::size_t k = 0; k < prior.components(); ++k) {
        logw[k] = std::log(prior.weights[k]) +
                  log_isotropic_normal_pdf(z, prior.means[k], marg_var);
        for (std::size_t j = 0; j < prior.dim; ++j)
            post.means[k][j] = v * (prior.means[k][j] / tau2 + z[j] / s2);
    }
    normalize_log_weights(logw);
    post.weights.resize(prior.components());
    for (std::size_t k = 0; k < prior.components(); ++k) post.weights[k] = std::exp(logw[k]);
    post.log_weights = std::move(logw);
    return post;
}

std::size_t sample_categorical(const std::vector<double>& weights, RngStream& rng) {
    const double u = rng.u01();
    double c = 0.0;
    for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
        c += weights[k];
        if (u < c) return k;
    }
    return weights.size() - 1;
}

Vec sample(const GaussianMixturePrior& prior, RngStream& rng) {
    const std::size_t k = sample_categorical(prior.weights, rng);
    Vec x(prior.dim);
    for (std::size_t j = 0; j < prior.dim; ++j)
        x[j] = prior.means[k][j] + prior.tau * rng.normal();
    return x;
}

Vec sample(const NoisedMixture& m, RngStream& rng) {
    const std::size_t k = sample_categorical(m.prior->weights, rng);
    const double sd = std::sqrt(m.var);
    Vec x(m.prior->dim);
    for (std::size_t j = 0; j < m.prior->dim; ++j)
        x[j] = m.prior->means[k][j] + sd * rng.normal();
    return x;
}

}  // namespace tgd
