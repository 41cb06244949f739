#include "tgd/reconstruct.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tgd/oracle.hpp"

namespace tgd {

void validate(const ReconstructionRequest& req) {
    if (req.z.empty()) throw std::invalid_argument("ReconstructionRequest: empty state");
    if (!(req.inner_s_min > 0.0))
        throw std::invalid_argument("ReconstructionRequest: inner_s_min must be positive");
    if (!(req.s_start > req.inner_s_min))
        throw std::invalid_argument("ReconstructionRequest: s_start must exceed inner_s_min");
    if (req.n_steps < 1) throw std::invalid_argument("ReconstructionRequest: n_steps must be >= 1");
    if (!(req.lambda >= 0.0)) throw std::invalid_argument("ReconstructionRequest: lambda must be >= 0");
    if (!(req.inner_curvature > 0.0))
        throw std::invalid_argument("ReconstructionRequest: inner_curvature must be positive");
    if (!(req.gamma >= 0.0)) throw std::invalid_argument("ReconstructionRequest: gamma must be >= 0");
}

namespace {

enum class Guidance { None, Jacobian, Identity };

Vec guided_flow(const GaussianMixturePrior& prior, const Observation* obs,
                const ReconstructionRequest& req, Guidance mode) {
    validate(req);
    const auto grid = edm_noise_grid(static_cast<std::size_t>(req.n_steps) + 1, req.s_start,
                                     req.inner_s_min, req.inner_curvature)
                          .levels;
    Vec x = req.z;
    Vec xhat(x.size()), grad(x.size()), pull(x.size());
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double s = grid[k];
        const double ds = grid[k + 1] - s;  // negative
        denoised_mean_into(prior, x, s, xhat);
        if (mode == Guidance::None) {
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += ds * (x[j] - xhat[j]) / s;
        } else {
            obs->guidance_gradient_into(xhat, req.gamma * s + obs->noise_std(), grad);
            if (mode == Guidance::Jacobian) {
                denoiser_jacobian_vec(prior, x, s, grad, pull);
            } else {
                pull = grad;
            }
            // Guidance increment -ds * s * lambda * pull, norm-capped at
            // guidance_clip * s to keep a near-singular likelihood from
            // overshooting in one Euler step.
            double scale = -ds * s * req.lambda;
            if (req.guidance_clip > 0.0) {
                const double n = std::sqrt(squared_norm(pull)) * scale;
                const double cap = req.guidance_clip * s;
                if (n > cap) scale *= cap / n;
            }
            for (std::size_t j = 0; j < x.size(); ++j)
                x[j] += ds * (x[j] - xhat[j]) / s + scale * pull[j];
        }
        if (!all_finite(x))
            throw std::runtime_error("reconstruction diverged at inner level s=" +
                                     std::to_string(grid[k + 1]));
    }
    denoised_mean_into(prior, x, grid.back(), xhat);
    return xhat;
}

// Unadjusted (or Metropolis-adjusted) Langevin over
// log pi(x) = -||x - center||^2 / (2 r^2) + lambda * log p(y | x),
// with step size decaying linearly from step_init to step_final. When
// adjusting, the acceptance target swaps the Gaussian proxy for the exact
// stagewise density exact_target(x) + lambda * log p(y | x).
Vec langevin_correct(const Observation& obs, const Vec& center, double r, double lambda,
                     const LangevinConfig& lang, RngStream& rng,
                     const std::function<double(const Vec&)>* exact_log_prior) {
    if (lang.n_steps < 0) throw std::invalid_argument("LangevinConfig: n_steps must be >= 0");
    if (!(lang.step_init > 0.0) || !(lang.step_final > 0.0))
        throw std::invalid_argument("LangevinConfig: step sizes must be positive");
    if (!(r > 0.0)) throw std::invalid_argument("langevin_correct: r must be positive");

    const double r2 = r * r;
    Vec x = center;
    Vec grad(x.size()), drift(x.size()), prop(x.size()), grad_p(x.size());

    auto proxy_log_density = [&](const Vec& v) {
        return -squared_distance(v, center) / (2.0 * r2) +
               obs.tempered_log_likelihood(v, lambda);
    };
    auto exact_log_density = [&](const Vec& v) {
        return (*exact_log_prior)(v) + obs.tempered_log_likelihood(v, lambda);
    };
    auto fill_drift = [&](const Vec& v, Vec& out) {
        if (lambda > 0.0) {
            obs.guidance_gradient_into(v, obs.noise_std(), out);
            for (std::size_t j = 0; j < v.size(); ++j)
                out[j] = lambda * out[j] - (v[j] - center[j]) / r2;
        } else {
            for (std::size_t j = 0; j < v.size(); ++j) out[j] = -(v[j] - center[j]) / r2;
        }
    };

    const int n = lang.n_steps;
    for (int t = 0; t < n; ++t) {
        const double frac = (n > 1) ? static_cast<double>(t) / static_cast<double>(n - 1) : 0.0;
        const double eta = lang.step_init + frac * (lang.step_final - lang.step_init);
        const double noise_sd = std::sqrt(2.0 * eta);
        fill_drift(x, grad);
        if (!lang.metropolis) {
            for (std::size_t j = 0; j < x.size(); ++j)
                x[j] += eta * grad[j] + noise_sd * rng.normal();
        } else {
            for (std::size_t j = 0; j < x.size(); ++j)
                prop[j] = x[j] + eta * grad[j] + noise_sd * rng.normal();
            fill_drift(prop, grad_p);
            double lq_fwd = 0.0, lq_rev = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double df = prop[j] - x[j] - eta * grad[j];
                const double dr = x[j] - prop[j] - eta * grad_p[j];
                lq_fwd += -df * df / (4.0 * eta);
                lq_rev += -dr * dr / (4.0 * eta);
            }
            const double target_new =
                exact_log_prior ? exact_log_density(prop) : proxy_log_density(prop);
            const double target_old =
                exact_log_prior ? exact_log_density(x) : proxy_log_density(x);
            const double log_alpha = target_new - target_old + lq_rev - lq_fwd;
            if (std::log(rng.u01_pos()) <= log_alpha) x = prop;
        }
        if (!all_finite(x))
            throw std::runtime_error("langevin correction diverged at step " + std::to_string(t));
    }
    return x;
}

}  // namespace

Vec ode_reconstruct(const GaussianMixturePrior& prior, const ReconstructionRequest& req) {
    return guided_flow(prior, nullptr, req, Guidance::None);
}

Vec dps_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                    const ReconstructionRequest& req) {
    if (req.lambda == 0.0) return guided_flow(prior, nullptr, req, Guidance::None);
    return guided_flow(prior, &obs, req, Guidance::Jacobian);
}

Vec mpgd_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                     const ReconstructionRequest& req) {
    if (req.lambda == 0.0) return guided_flow(prior, nullptr, req, Guidance::None);
    return guided_flow(prior, &obs, req, Guidance::Identity);
}

Vec daps_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                     const ReconstructionRequest& req, const LangevinConfig& lang,
                     RngStream& rng) {
    const Vec xbar = ode_reconstruct(prior, req);
    if (lang.n_steps == 0) return xbar;
    return langevin_correct(obs, xbar, lang.r_scale * req.s_start, req.lambda, lang, rng,
                            nullptr);
}

Vec hybrid_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                       const ReconstructionRequest& req, double nu,
                       const LangevinConfig& lang, RngStream& rng) {
    if (!(nu >= 0.0) || nu > req.lambda)
        throw std::invalid_argument("hybrid_reconstruct: nu must lie in [0, lambda]");
    ReconstructionRequest phase1 = req;
    phase1.lambda = nu;
    const Vec xt = dps_reconstruct(prior, obs, phase1);
    if (lang.n_steps == 0) return xt;

    std::function<double(const Vec&)> exact_log_prior;
    const std::function<double(const Vec&)>* exact_ptr = nullptr;
    GaussianMixturePrior stagewise;
    if (lang.metropolis) {
        stagewise = posterior_mixture_given_z(prior, req.z, req.s_start);
        exact_log_prior = [&stagewise](const Vec& v) { return log_pdf(stagewise, v); };
        exact_ptr = &exact_log_prior;
    }
    return langevin_correct(obs, xt, lang.r_scale * req.s_start, req.lambda, lang, rng,
                            exact_ptr);
}

Vec exact_tempered_reconstruct(const GaussianMixturePrior& prior,
                               const AbsValueObservation& obs, const Vec& z, double s,
                               double lambda, RngStream& rng) {
    if (!(lambda >= 0.0))
        throw std::invalid_argument("exact_tempered_reconstruct: lambda must be >= 0");
    const GaussianMixturePrior stagewise = posterior_mixture_given_z(prior, z, s);
    if (lambda == 0.0) return sample(stagewise, rng);
    const double sigma_eff = obs.noise_std() / std::sqrt(lambda);
    const SignBranchPosterior post =
        build_sign_branch_posterior(stagewise, obs.data(), sigma_eff);
    return sample(post, rng);
}

Reconstructor make_reconstructor(const GaussianMixturePrior& prior, const Observation& obs,
                                 const ModuleConfig& cfg) {
    if (cfg.kind == ModuleKind::Exact) {
        const auto* abs_obs = dynamic_cast<const AbsValueObservation*>(&obs);
        if (!abs_obs)
            throw std::invalid_argument(
                "make_reconstructor: exact module requires an absolute-value observation");
        return [&prior, abs_obs](const Vec& z, double s, double lambda, RngStream& rng) {
            return exact_tempered_reconstruct(prior, *abs_obs, z, s, lambda, rng);
        };
    }
    return [&prior, &obs, cfg](const Vec& z, double s, double lambda, RngStream& rng) {
        ReconstructionRequest req;
        req.z = z;
        req.s_start = s;
        req.lambda = lambda;
        req.n_steps = cfg.inner_steps;
        req.inner_s_min = std::min(cfg.inner_s_min, s * 0.5);
        req.inner_curvature = cfg.inner_curvature;
        req.gamma = cfg.gamma;
        req.guidance_clip = cfg.guidance_clip;
        switch (cfg.kind) {
            case ModuleKind::Uncond:
                return ode_reconstruct(prior, req);
            case ModuleKind::Dps:
                return dps_reconstruct(prior, obs, req);
            case ModuleKind::Mpgd:
                return mpgd_reconstruct(prior, obs, req);
            case ModuleKind::Daps:
                return daps_reconstruct(prior, obs, req, cfg.langevin, rng);
            case ModuleKind::Hybrid:
                return hybrid_reconstruct(prior, obs, req, std::min(cfg.nu, lambda),
                                          cfg.langevin, rng);
            default:
                throw std::logic_error("make_reconstructor: unknown module");
        }
    };
}

}  // namespace tgd
