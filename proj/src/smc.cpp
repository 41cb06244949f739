#include "tgd/smc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "tgd/parallel.hpp"

namespace tgd {

ParticleEnsemble init_particles(const GaussianMixturePrior& prior, std::size_t n_particles,
                                double s_max, std::size_t stage, std::uint64_t init_key) {
    if (n_particles == 0) throw std::invalid_argument("init_particles: need at least one particle");
    ParticleEnsemble ens;
    ens.z.resize(n_particles);
    ens.log_w.assign(n_particles, -std::log(static_cast<double>(n_particles)));
    ens.stage = stage;
    ens.level = s_max;
    const NoisedMixture top = noised(prior, s_max);
    parallel_for(n_particles, [&](std::size_t i) {
        RngStream rng = particle_stream(init_key, i);
        ens.z[i] = sample(top, rng);
    });
    return ens;
}

double ess(const ParticleEnsemble& ens) {
    double m = -std::numeric_limits<double>::infinity();
    for (double lw : ens.log_w) m = std::max(m, lw);
    double s1 = 0.0, s2 = 0.0;
    for (double lw : ens.log_w) {
        const double w = std::exp(lw - m);
        s1 += w;
        s2 += w * w;
    }
    return s1 * s1 / s2;
}

std::vector<double> incremental_log_weights(ParticleEnsemble& ens, const Observation& obs,
                                            double lambda_prev, double lambda_next) {
    if (lambda_next < lambda_prev)
        throw std::invalid_argument("incremental_log_weights: exponent must not decrease");
    if (ens.x0.size() != ens.size())
        throw std::invalid_argument("incremental_log_weights: no clean candidates");
    std::vector<double> loglik(ens.size());
    parallel_for(ens.size(), [&](std::size_t i) { loglik[i] = obs.log_likelihood(ens.x0[i]); });
    const double dl = lambda_next - lambda_prev;
    if (dl > 0.0) {
        for (std::size_t i = 0; i < ens.size(); ++i) ens.log_w[i] += dl * loglik[i];
        try {
            normalize_log_weights(ens.log_w);
        } catch (const std::runtime_error&) {
            throw std::runtime_error("degenerate ensemble at stage " +
                                     std::to_string(ens.stage) +
                                     ": all particles have zero tempered-posterior mass");
        }
    }
    return loglik;
}

std::vector<std::size_t> systematic_indices(const std::vector<double>& weights, double u) {
    const std::size_t n = weights.size();
    if (n == 0) throw std::invalid_argument("systematic_indices: empty weights");
    if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("systematic_indices: u outside [0, 1)");
    std::vector<std::size_t> idx(n);
    double cum = weights[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = (static_cast<double>(i) + u) / static_cast<double>(n);
        while (pos >= cum && j + 1 < n) cum += weights[++j];
        idx[i] = j;
    }
    return idx;
}

std::vector<std::size_t> multinomial_indices(const std::vector<double>& weights,
                                             std::size_t n_draws, RngStream& rng) {
    const std::size_t n = weights.size();
    if (n == 0) throw std::invalid_argument("multinomial_indices: empty weights");
    std::vector<double> cdf(n);
    double cum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        cum += weights[k];
        cdf[k] = cum;
    }
    std::vector<std::size_t> idx(n_draws);
    for (std::size_t i = 0; i < n_draws; ++i) {
        const double u = rng.u01() * cum;
        idx[i] = static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (idx[i] >= n) idx[i] = n - 1;
    }
    return idx;
}

namespace {

std::vector<double> linear_weights(const ParticleEnsemble& ens) {
    std::vector<double> w(ens.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < ens.size(); ++i) {
        w[i] = std::exp(ens.log_w[i]);
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

template <typename T>
void gather(std::vector<T>& items, const std::vector<std::size_t>& idx) {
    std::vector<T> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = items[idx[i]];
    items = std::move(out);
}

}  // namespace

void resample(ParticleEnsemble& ens, ResampleScheme scheme, RngStream& rng) {
    if (scheme == ResampleScheme::None)
        throw std::invalid_argument("resample: scheme 'none' cannot be executed");
    const std::vector<double> w = linear_weights(ens);
    std::vector<std::size_t> idx;
    if (scheme == ResampleScheme::Systematic) {
        idx = systematic_indices(w, rng.u01());
    } else {
        idx = multinomial_indices(w, ens.size(), rng);
    }
    gather(ens.z, idx);
    if (!ens.x0.empty()) gather(ens.x0, idx);
    ens.log_w.assign(ens.size(), -std::log(static_cast<double>(ens.size())));
}

void tgd_stage(ParticleEnsemble& ens, const StageParams& params, const Reconstructor& module,
               const Observation& obs, const ResamplePolicy& policy, const StageRng& streams,
               const TraceFn* trace) {
    const std::size_t n = ens.size();
    ens.x0.resize(n);
    parallel_for(n, [&](std::size_t i) {
        RngStream rng = particle_stream(streams.reconstruct_key, i);
        ens.x0[i] = module(ens.z[i], params.s_r, params.lambda_r, rng);
    });

    const std::vector<double> loglik =
        incremental_log_weights(ens, obs, params.lambda_r, params.lambda_next);

    const double ess_before = ess(ens);
    // Resampling only follows a nontrivial weighting step; constant-exponent
    // transitions keep weights (hence ESS) fixed, so there is nothing to
    // correct and the population passes through intact.
    const bool weighted = params.lambda_next > params.lambda_r;
    bool do_resample = false;
    switch (policy.trigger) {
        case ResampleTrigger::Always: do_resample = weighted && n > 1; break;
        case ResampleTrigger::Never: do_resample = false; break;
        case ResampleTrigger::EssThreshold:
            do_resample = weighted && ess_before < policy.ess_fraction * static_cast<double>(n);
            break;
    }
    if (policy.scheme == ResampleScheme::None) do_resample = false;
    if (do_resample) {
        RngStream rng(streams.resample_key);
        resample(ens, policy.scheme, rng);
    }

    parallel_for(n, [&](std::size_t i) {
        RngStream rng = particle_stream(streams.renoise_key, i);
        forward_noise_into(ens.x0[i], params.s_next, rng, ens.z[i]);
    });
    ens.stage = params.r - 1;
    ens.level = params.s_next;

    if (trace && *trace) {
        StageTrace t;
        t.stage = params.r;
        t.s = params.s_r;
        t.lambda = params.lambda_r;
        t.ess_before = ess_before;
        t.resampled = do_resample;
        double sum = 0.0, mx = -std::numeric_limits<double>::infinity();
        for (double ll : loglik) {
            sum += ll;
            mx = std::max(mx, ll);
        }
        t.loglik_mean = sum / static_cast<double>(n);
        t.loglik_max = mx;
        (*trace)(t);
    }
}

namespace {

void check_schedules(const NoiseSchedule& noise, const TemperingSchedule& temper) {
    validate(noise);
    validate(temper);
    if (noise.levels.size() != temper.exponents.size())
        throw std::invalid_argument("schedule lengths differ");
}

}  // namespace

ParticleEnsemble run_tgd(const GaussianMixturePrior& prior, const Observation& obs,
                         std::size_t n_particles, const NoiseSchedule& noise,
                         const TemperingSchedule& temper, const Reconstructor& module,
                         const ResamplePolicy& policy, std::uint64_t master,
                         const TraceFn* trace) {
    check_schedules(noise, temper);
    const std::size_t R = noise.stage_count();
    ParticleEnsemble ens = init_particles(prior, n_particles, noise.levels.front(), R,
                                          phase_stage_key(master, Phase::Init, R));
    for (std::size_t r = R; r >= 1; --r) {
        StageParams p;
        p.r = r;
        p.s_r = noise.at_stage(r);
        p.lambda_r = temper.at_stage(r);
        p.s_next = noise.at_stage(r - 1);
        p.lambda_next = temper.at_stage(r - 1);
        tgd_stage(ens, p, module, obs, policy, stage_rng(master, r), trace);
    }
    ens.x0.resize(ens.size());
    const std::uint64_t term_key = phase_stage_key(master, Phase::Reconstruct, 0);
    const double s0 = noise.at_stage(0);
    const double l0 = temper.at_stage(0);
    parallel_for(ens.size(), [&](std::size_t i) {
        RngStream rng = particle_stream(term_key, i);
        ens.x0[i] = module(ens.z[i], s0, l0, rng);
    });
    return ens;
}

std::size_t atgd_transition_count(double rho, std::size_t stages) {
    if (!(rho >= 0.0 && rho <= 1.0))
        throw std::invalid_argument("atgd_transition_count: rho must lie in [0, 1]");
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(rho * static_cast<double>(stages)));
    return std::min(stages, std::max<std::size_t>(1, k));
}

Vec run_atgd(const GaussianMixturePrior& prior, const Observation& obs,
             std::size_t n_particles, const NoiseSchedule& noise,
             const TemperingSchedule& temper, const Reconstructor& module,
             const ResamplePolicy& policy, double rho, std::uint64_t master,
             const TraceFn* trace) {
    check_schedules(noise, temper);
    const std::size_t R = noise.stage_count();
    ParticleEnsemble ens = init_particles(prior, n_particles, noise.levels.front(), R,
                                          phase_stage_key(master, Phase::Init, R));
    const std::size_t K = atgd_transition_count(rho, R);
    for (std::size_t r = R; r > R - K; --r) {
        StageParams p;
        p.r = r;
        p.s_r = noise.at_stage(r);
        p.lambda_r = temper.at_stage(r);
        p.s_next = noise.at_stage(r - 1);
        p.lambda_next = temper.at_stage(r - 1);
        tgd_stage(ens, p, module, obs, policy, stage_rng(master, r), trace);
    }

    // Selection: reconstruct the whole population once at the pruning stage
    // and keep the noisy state of the best-scoring candidate.
    const std::size_t rp = R - K;
    std::vector<Vec> cand(ens.size());
    const std::uint64_t prune_key = phase_stage_key(master, Phase::Prune, rp);
    parallel_for(ens.size(), [&](std::size_t i) {
        RngStream rng = particle_stream(prune_key, i);
        cand[i] = module(ens.z[i], noise.at_stage(rp), temper.at_stage(rp), rng);
    });
    const std::size_t istar = argmax_log_likelihood(obs, cand);

    Vec z = ens.z[istar];
    for (std::size_t r = rp; r >= 1; --r) {
        RngStream rec = particle_stream(phase_stage_key(master, Phase::Reconstruct, r), istar);
        const Vec x0 = module(z, noise.at_stage(r), temper.at_stage(r), rec);
        RngStream ren = particle_stream(phase_stage_key(master, Phase::Renoise, r - 1), istar);
        forward_noise_into(x0, noise.at_stage(r - 1), ren, z);
    }
    RngStream term = particle_stream(phase_stage_key(master, Phase::Reconstruct, 0), istar);
    return module(z, noise.at_stage(0), temper.at_stage(0), term);
}

}  // namespace tgd
