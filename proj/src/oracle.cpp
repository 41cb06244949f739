#include "tgd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tgd {

SignBranchPosterior build_sign_branch_posterior(const GaussianMixturePrior& prior,
                                                const Vec& y, double sigma_eff) {
    if (y.size() != prior.dim)
        throw std::invalid_argument("build_sign_branch_posterior: dimension mismatch");
    if (!(sigma_eff > 0.0))
        throw std::invalid_argument("build_sign_branch_posterior: sigma_eff must be positive");

    const std::size_t K = prior.components();
    const std::size_t d = prior.dim;
    const double v = prior.tau * prior.tau;
    const double ve = sigma_eff * sigma_eff;
    const double vp = 1.0 / (1.0 / v + 1.0 / ve);
    const double sd = std::sqrt(vp);

    SignBranchPosterior post;
    post.dim = d;
    post.sd = sd;
    post.prior_means = prior.means;
    post.log_prior_w.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        post.log_prior_w[k] = prior.log_weights.empty() ? std::log(prior.weights[k])
                                                        : prior.log_weights[k];
    post.prior_var = v;
    post.y = y;
    post.sigma_eff = sigma_eff;
    post.pos_mean.resize(K * d);
    post.neg_mean.resize(K * d);
    post.log_pos_prob.resize(K * d);
    post.log_comp_w.resize(K);

    for (std::size_t k = 0; k < K; ++k) {
        double lw = post.log_prior_w[k];
        for (std::size_t j = 0; j < d; ++j) {
            const double mu = prior.means[k][j];
            const double yj = y[j];
            // Positive branch: N(x; mu, v) N(x; y_j, ve) on x > 0.
            const double mp = vp * (mu / v + yj / ve);
            const double lzp = log_normal_pdf(yj, mu, v + ve) + log_norm_cdf(mp / sd);
            // Negative branch: |x| = -x, so the likelihood factor is centered
            // at -y_j and the branch keeps x < 0.
            const double mn = vp * (mu / v - yj / ve);
            const double lzn = log_normal_pdf(yj, -mu, v + ve) + log_norm_cdf(-mn / sd);
            const double tot = log_add(lzp, lzn);
            post.pos_mean[k * d + j] = mp;
            post.neg_mean[k * d + j] = mn;
            post.log_pos_prob[k * d + j] = lzp - tot;
            lw += tot;
        }
        post.log_comp_w[k] = lw;
    }
    post.log_evidence = logsumexp(post.log_comp_w);
    if (!std::isfinite(post.log_evidence))
        throw std::runtime_error("build_sign_branch_posterior: posterior has no mass");
    for (double& w : post.log_comp_w) w -= post.log_evidence;
    return post;
}

double truncated_normal_lower(double mean, double sd, double lower, RngStream& rng) {
    if (!(sd > 0.0)) throw std::invalid_argument("truncated_normal_lower: sd must be positive");
    const double a = (lower - mean) / sd;
    if (a <= 8.0) {
        const double tail = norm_sf(a);
        const double t = tail * (1.0 - rng.u01());
        return mean + sd * (-norm_quantile(t));
    }
    // Deep truncation: translated-exponential rejection, exact and O(1).
    const double lam = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
        const double z = a - std::log(rng.u01_pos()) / lam;
        const double d = z - lam;
        if (std::log(rng.u01_pos()) <= -0.5 * d * d) return mean + sd * z;
    }
}

Vec sample(const SignBranchPosterior& post, RngStream& rng) {
    const std::size_t d = post.dim;
    // Component by inverse CDF over normalized log weights.
    const double u = rng.u01();
    std::size_t k = post.components() - 1;
    double c = 0.0;
    for (std::size_t i = 0; i + 1 < post.components(); ++i) {
        c += std::exp(post.log_comp_w[i]);
        if (u < c) {
            k = i;
            break;
        }
    }
    Vec x(d);
    for (std::size_t j = 0; j < d; ++j) {
        const bool positive = std::log(rng.u01_pos()) < post.log_pos_prob[k * d + j];
        if (positive) {
            x[j] = truncated_normal_lower(post.pos_mean[k * d + j], post.sd, 0.0, rng);
        } else {
            x[j] = -truncated_normal_lower(-post.neg_mean[k * d + j], post.sd, 0.0, rng);
        }
    }
    return x;
}

std::vector<Vec> sample_many(const SignBranchPosterior& post, std::size_t n, RngStream& rng) {
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample(post, rng));
    return out;
}

double log_pdf(const SignBranchPosterior& post, const Vec& x) {
    if (x.size() != post.dim) throw std::invalid_argument("log_pdf: dimension mismatch");
    const double v = post.prior_var;
    const double ve = post.sigma_eff * post.sigma_eff;
    std::vector<double> terms(post.components());
    for (std::size_t k = 0; k < post.components(); ++k) {
        double t = post.log_prior_w[k];
        for (std::size_t j = 0; j < post.dim; ++j)
            t += log_normal_pdf(x[j], post.prior_means[k][j], v) +
                 log_normal_pdf(post.y[j], std::fabs(x[j]), ve);
        terms[k] = t;
    }
    return logsumexp(terms) - post.log_evidence;
}

PosteriorGrid tempered_posterior_grid(const GaussianMixturePrior& prior,
                                      const Observation& obs, double lambda,
                                      double lo, double hi, std::size_t n) {
    if (prior.dim != 2)
        throw std::invalid_argument("tempered_posterior_grid: requires a 2-d prior");
    if (n < 2) throw std::invalid_argument("tempered_posterior_grid: n must be >= 2");
    if (!(hi > lo)) throw std::invalid_argument("tempered_posterior_grid: empty range");
    PosteriorGrid g;
    g.lo = lo;
    g.hi = hi;
    g.n = n;
    g.log_density.resize(n * n);
    Vec pt(2);
    for (std::size_t i = 0; i < n; ++i) {
        pt[0] = g.x(i);
        for (std::size_t j = 0; j < n; ++j) {
            pt[1] = g.x(j);
            g.log_density[i * n + j] =
                log_pdf(prior, pt) + obs.tempered_log_likelihood(pt, lambda);
        }
    }
    return g;
}

GridDistribution grid_posterior(const GaussianMixturePrior& prior, const Observation& obs,
                                double lo, double hi, std::size_t n, std::size_t refine) {
    if (prior.dim != 2) throw std::invalid_argument("grid_posterior: requires a 2-d prior");
    if (n < 4) throw std::invalid_argument("grid_posterior: n must be >= 4");
    if (refine < 1) throw std::invalid_argument("grid_posterior: refine must be >= 1");
    if (!(hi > lo)) throw std::invalid_argument("grid_posterior: empty range");

    const double h = (hi - lo) / static_cast<double>(n);
    std::vector<double> logm(n * n);
    Vec pt(2);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        pt[0] = lo + (static_cast<double>(i) + 0.5) * h;
        for (std::size_t j = 0; j < n; ++j) {
            pt[1] = lo + (static_cast<double>(j) + 0.5) * h;
            const double l = log_pdf(prior, pt) + obs.log_likelihood(pt);
            logm[i * n + j] = l;
            if (l > peak) peak = l;
        }
    }
    if (!std::isfinite(peak)) throw std::runtime_error("grid_posterior: no mass inside the box");

    double total = 0.0, boundary = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double m = std::exp(logm[i * n + j] - peak);
            total += m;
            if (i == 0 || j == 0 || i + 1 == n || j + 1 == n) boundary += m;
        }
    if (boundary > 1e-6 * total)
        throw std::invalid_argument("grid_posterior: box too small, boundary carries " +
                                    std::to_string(boundary / total) + " of the mass");

    GridDistribution g;
    g.lo = lo;
    g.hi = hi;
    g.base_n = n;
    g.refine = refine;
    const double hf = h / static_cast<double>(refine);
    // Relative-mass cutoff for subdividing a coarse cell. Well below anything
    // a 10^4-sample comparison can resolve, well above underflow.
    const double cut = 1e-16;
    for (std::size_t i = 0; i < n; ++i) {
        const double x0c = lo + static_cast<double>(i) * h;
        for (std::size_t j = 0; j < n; ++j) {
            const double y0c = lo + static_cast<double>(j) * h;
            const double rel = std::exp(logm[i * n + j] - peak);
            if (rel <= cut || refine == 1) {
                g.cx.push_back(x0c + 0.5 * h);
                g.cy.push_back(y0c + 0.5 * h);
                g.half.push_back(0.5 * h);
                g.mass.push_back(rel * h * h);
                continue;
            }
            for (std::size_t a = 0; a < refine; ++a) {
                pt[0] = x0c + (static_cast<double>(a) + 0.5) * hf;
                for (std::size_t b = 0; b < refine; ++b) {
                    pt[1] = y0c + (static_cast<double>(b) + 0.5) * hf;
                    const double l = log_pdf(prior, pt) + obs.log_likelihood(pt);
                    g.cx.push_back(pt[0]);
                    g.cy.push_back(pt[1]);
                    g.half.push_back(0.5 * hf);
                    g.mass.push_back(std::exp(l - peak) * hf * hf);
                }
            }
        }
    }
    double sum = 0.0;
    for (double m : g.mass) sum += m;
    g.cdf.resize(g.mass.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < g.mass.size(); ++i) {
        g.mass[i] /= sum;
        acc += g.mass[i];
        g.cdf[i] = acc;
    }
    g.cdf.back() = 1.0;
    return g;
}

Vec sample(const GridDistribution& g, RngStream& rng) {
    const double u = rng.u01();
    const std::size_t i = static_cast<std::size_t>(
        std::lower_bound(g.cdf.begin(), g.cdf.end(), u) - g.cdf.begin());
    const double w = 2.0 * g.half[i];
    Vec x(2);
    x[0] = g.cx[i] + (rng.u01() - 0.5) * w;
    x[1] = g.cy[i] + (rng.u01() - 0.5) * w;
    return x;
}

std::vector<Vec> sample_many(const GridDistribution& g, std::size_t n, RngStream& rng) {
    std::vector<Vec> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample(g, rng));
    return out;
}

double grid_quadrant_mass(const GridDistribution& g, const Vec& q) {
    if (q.size() != 2) throw std::invalid_argument("grid_quadrant_mass: q must be 2-d");
    double m = 0.0;
    for (std::size_t i = 0; i < g.leaves(); ++i) {
        const bool sx = (q[0] >= 0.0) == (g.cx[i] >= 0.0);
        const bool sy = (q[1] >= 0.0) == (g.cy[i] >= 0.0);
        if (sx && sy) m += g.mass[i];
    }
    return m;
}

double grid_log_mass(const PosteriorGrid& g) {
    const double h = g.step();
    return logsumexp(g.log_density) + 2.0 * std::log(h);
}

Vec grid_mean(const PosteriorGrid& g) {
    const double lse = logsumexp(g.log_density);
    Vec mean(2, 0.0);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            const double w = std::exp(g.log_density[i * g.n + j] - lse);
            mean[0] += w * g.x(i);
            mean[1] += w * g.x(j);
        }
    return mean;
}

}  // namespace tgd
