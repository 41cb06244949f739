#pragma once

#include <functional>

#include "tgd/math.hpp"
#include "tgd/observation.hpp"
#include "tgd/prior.hpp"
#include "tgd/rng.hpp"
#include "tgd/schedules.hpp"

namespace tgd {

// One reconstruction task: map a noisy state z at level s_start to a clean
// candidate, guiding toward the observation with exponent lambda. The inner
// grid for ODE-based modules runs from s_start down to inner_s_min on its own
// geometric schedule.
struct ReconstructionRequest {
    Vec z;
    double s_start = 0.0;
    double lambda = 0.0;
    int n_steps = 1;
    double inner_s_min = 0.01;
    double inner_curvature = 7.0;
    double gamma = 0.8;          // proposal noise slope: std = gamma * s + sigma_y
    double guidance_clip = 1e3;  // per-step guidance norm bound in units of s; <= 0 disables
};

void validate(const ReconstructionRequest& req);

struct LangevinConfig {
    int n_steps = 100;
    double step_init = 1e-4;
    double step_final = 1e-5;
    double r_scale = 1.0;      // clean-prior width r = r_scale * s_start
    bool metropolis = false;   // Metropolis-adjust against the exact stagewise target
};

// Probability-flow reconstruction, unconditional: Euler steps of
// dx/ds = (x - denoised_mean(x, s)) / s down the inner grid, then a final
// denoise at the grid floor.
Vec ode_reconstruct(const GaussianMixturePrior& prior, const ReconstructionRequest& req);

// Same flow with a likelihood-guidance term -s * lambda * J^T grad added to
// the drift, J the denoiser Jacobian. lambda = 0 takes the unconditional path
// bit for bit.
Vec dps_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                    const ReconstructionRequest& req);

// Guidance without the Jacobian factor (J replaced by the identity).
Vec mpgd_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                     const ReconstructionRequest& req);

// Decoupled two-phase reconstruction: unconditional flow to x_bar, then
// unadjusted Langevin targeting a Gaussian clean-state prior around x_bar
// times the tempered likelihood. n_steps = 0 returns x_bar unchanged.
Vec daps_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                     const ReconstructionRequest& req, const LangevinConfig& lang,
                     RngStream& rng);

// Guided flow at exponent nu (0 <= nu <= lambda) followed by a Langevin
// correction at the full exponent, centered at the phase-one output. With
// metropolis set, proposals are accepted against the exact stagewise density
// p_s(x0 | z) * likelihood^lambda, which is computable for this prior.
Vec hybrid_reconstruct(const GaussianMixturePrior& prior, const Observation& obs,
                       const ReconstructionRequest& req, double nu,
                       const LangevinConfig& lang, RngStream& rng);

// Exact draw from the stagewise tempered posterior
// p(x0 | z) * p(y | x0)^lambda for the absolute-value observation, via the
// sign-branch construction with sigma_eff = sigma_y / sqrt(lambda).
Vec exact_tempered_reconstruct(const GaussianMixturePrior& prior,
                               const AbsValueObservation& obs, const Vec& z,
                               double s, double lambda, RngStream& rng);

enum class ModuleKind { Uncond, Dps, Mpgd, Daps, Hybrid, Exact };

struct ModuleConfig {
    ModuleKind kind = ModuleKind::Dps;
    int inner_steps = 1;
    double inner_s_min = 0.01;
    double inner_curvature = 7.0;
    double gamma = 0.8;
    double guidance_clip = 1e3;
    double nu = 0.0;  // hybrid phase-one exponent
    LangevinConfig langevin;
};

// Callable the sampler invokes per particle and stage. The rng argument is
// ignored by deterministic modules.
using Reconstructor = std::function<Vec(const Vec& z, double s, double lambda, RngStream& rng)>;

// Binds prior and observation (held by reference; caller keeps them alive).
// The inner grid floor is clamped per stage to min(inner_s_min, s / 2) so
// stages at or below the configured floor still integrate a valid range.
Reconstructor make_reconstructor(const GaussianMixturePrior& prior, const Observation& obs,
                                 const ModuleConfig& cfg);

}  // namespace tgd
