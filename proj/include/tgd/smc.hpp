#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "tgd/math.hpp"
#include "tgd/observation.hpp"
#include "tgd/prior.hpp"
#include "tgd/reconstruct.hpp"
#include "tgd/rng.hpp"
#include "tgd/schedules.hpp"

namespace tgd {

// Weighted population mid-anneal. log_w stays normalized (logsumexp == 0).
// x0 holds the latest clean reconstructions once a stage has produced them;
// z is the noisy state at `level`.
struct ParticleEnsemble {
    std::vector<Vec> z;
    std::vector<Vec> x0;
    std::vector<double> log_w;
    std::size_t stage = 0;
    double level = 0.0;

    std::size_t size() const noexcept { return z.size(); }
};

enum class ResampleScheme { Systematic, Multinomial, None };
enum class ResampleTrigger { Always, Never, EssThreshold };

struct ResamplePolicy {
    ResampleScheme scheme = ResampleScheme::Systematic;
    ResampleTrigger trigger = ResampleTrigger::Always;
    double ess_fraction = 0.5;  // EssThreshold fires when ESS < ess_fraction * N
};

// Substream layout. Every random decision draws from a stream keyed by
// (master, phase, stage[, particle]), so a draw's position is independent of
// execution order, thread count, and of how many draws other phases consumed.
// Renoise keys use the *target* stage. A-TGD's selection step has its own
// phase, which keeps its pre-selection stages bit-identical to TGD's.
enum class Phase : std::uint64_t {
    Init = 1,
    Reconstruct = 2,
    Resample = 3,
    Renoise = 4,
    Prune = 5,
};

inline std::uint64_t phase_stage_key(std::uint64_t master, Phase phase, std::size_t stage) {
    return derive_key(derive_key(master, static_cast<std::uint64_t>(phase)), stage);
}

inline RngStream particle_stream(std::uint64_t phase_stage, std::size_t particle) {
    return RngStream(derive_key(phase_stage, particle));
}

// Per-stage stream keys, overridable in tests to probe invariances.
struct StageRng {
    std::uint64_t reconstruct_key = 0;
    std::uint64_t resample_key = 0;
    std::uint64_t renoise_key = 0;  // keyed by the stage being noised *into*
};

inline StageRng stage_rng(std::uint64_t master, std::size_t stage) {
    return StageRng{phase_stage_key(master, Phase::Reconstruct, stage),
                    phase_stage_key(master, Phase::Resample, stage),
                    phase_stage_key(master, Phase::Renoise, stage - 1)};
}

// N particles z ~ N(0, s_max^2 I) plus the prior spread: draws from the
// noised prior at the top level, with uniform weights.
ParticleEnsemble init_particles(const GaussianMixturePrior& prior, std::size_t n_particles,
                                double s_max, std::size_t stage, std::uint64_t init_key);

// Effective sample size 1 / sum w_i^2 of the normalized weights; equals N
// exactly for uniform weights.
double ess(const ParticleEnsemble& ens);

// Multiplies weights by likelihood^(lambda_next - lambda_prev) using the
// current x0, then renormalizes. Equal exponents leave log_w untouched bit
// for bit. Returns the per-particle log-likelihoods. Throws when every
// particle has zero posterior mass, naming the stage.
std::vector<double> incremental_log_weights(ParticleEnsemble& ens, const Observation& obs,
                                            double lambda_prev, double lambda_next);

// Comb positions (i + u) / N against the weight CDF; u uniform on [0, 1).
// Each index appears floor(N w_i) or ceil(N w_i) times.
std::vector<std::size_t> systematic_indices(const std::vector<double>& weights, double u);

std::vector<std::size_t> multinomial_indices(const std::vector<double>& weights,
                                             std::size_t n_draws, RngStream& rng);

// Replaces the population (z, x0) by the selected copies and resets weights
// to uniform.
void resample(ParticleEnsemble& ens, ResampleScheme scheme, RngStream& rng);

// Snapshot of one annealing transition, for trace output.
struct StageTrace {
    std::size_t stage = 0;     // r of the transition r -> r-1
    double s = 0.0;            // s_r
    double lambda = 0.0;       // lambda_r
    double ess_before = 0.0;   // after reweighting, before any resample
    bool resampled = false;
    double loglik_mean = 0.0;
    double loglik_max = 0.0;
};

using TraceFn = std::function<void(const StageTrace&)>;

struct StageParams {
    std::size_t r = 0;     // current stage (source)
    double s_r = 0.0;
    double lambda_r = 0.0;
    double s_next = 0.0;       // s_{r-1}
    double lambda_next = 0.0;  // lambda_{r-1}
};

// One annealing transition: reconstruct every particle at (lambda_r, s_r),
// reweight by likelihood^(lambda_next - lambda_r), optionally resample, and
// re-noise the retained clean states to s_next. The incremental weight is a
// function of the clean candidates only, so it is computed before re-noising.
void tgd_stage(ParticleEnsemble& ens, const StageParams& params, const Reconstructor& module,
               const Observation& obs, const ResamplePolicy& policy, const StageRng& streams,
               const TraceFn* trace = nullptr);

// Full annealed run over aligned noise/tempering schedules; returns the
// terminal ensemble with weighted clean samples in x0.
ParticleEnsemble run_tgd(const GaussianMixturePrior& prior, const Observation& obs,
                         std::size_t n_particles, const NoiseSchedule& noise,
                         const TemperingSchedule& temper, const Reconstructor& module,
                         const ResamplePolicy& policy, std::uint64_t master,
                         const TraceFn* trace = nullptr);

// Accelerated variant: run ceil(rho * R) transitions (at least 1, at most R)
// with the full population, reconstruct everyone once, keep the single
// highest-likelihood candidate's noisy state, and finish that one trajectory
// without further reweighting. Returns one clean sample.
Vec run_atgd(const GaussianMixturePrior& prior, const Observation& obs,
             std::size_t n_particles, const NoiseSchedule& noise,
             const TemperingSchedule& temper, const Reconstructor& module,
             const ResamplePolicy& policy, double rho, std::uint64_t master,
             const TraceFn* trace = nullptr);

// Number of full-population transitions A-TGD runs for a given rho and R.
std::size_t atgd_transition_count(double rho, std::size_t stages);

}  // namespace tgd
