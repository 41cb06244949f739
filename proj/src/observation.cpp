#include "tgd/observation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tgd {

namespace {

thread_local Vec tl_fwd;

double residual_log_density(const Observation& obs, const Vec& x, double std) {
    obs.apply_into(x, tl_fwd);
    const double var = std * std;
    const std::size_t m = tl_fwd.size();
    return -0.5 * static_cast<double>(m) * (kLog2Pi + std::log(var)) -
           squared_distance(tl_fwd, obs.data()) / (2.0 * var);
}

}  // namespace

Vec Observation::apply(const Vec& x) const {
    Vec out;
    apply_into(x, out);
    return out;
}

Vec Observation::guidance_gradient(const Vec& x, double proposal_std) const {
    Vec out;
    guidance_gradient_into(x, proposal_std, out);
    return out;
}

double Observation::log_likelihood(const Vec& x0) const {
    return residual_log_density(*this, x0, noise_std());
}

double Observation::tempered_log_likelihood(const Vec& x0, double lambda) const {
    if (!(lambda >= 0.0))
        throw std::invalid_argument("tempered_log_likelihood: lambda must be >= 0");
    if (lambda == 0.0) return 0.0;
    return lambda * log_likelihood(x0);
}

double Observation::proposal_log_likelihood(const Vec& x, double s, double gamma) const {
    const double std = gamma * s + noise_std();
    if (!(std > 0.0))
        throw std::invalid_argument("proposal_log_likelihood: proposal std must be positive");
    return residual_log_density(*this, x, std);
}

double Observation::measurement_error(const Vec& x0) const {
    apply_into(x0, tl_fwd);
    return squared_distance(tl_fwd, data());
}

AbsValueObservation::AbsValueObservation(Vec y, double sigma_y)
    : y_(std::move(y)), sigma_y_(sigma_y) {
    if (y_.empty()) throw std::invalid_argument("AbsValueObservation: empty data");
    if (!(sigma_y_ > 0.0))
        throw std::invalid_argument("AbsValueObservation: sigma_y must be positive");
}

void AbsValueObservation::apply_into(const Vec& x, Vec& out) const {
    if (x.size() != y_.size())
        throw std::invalid_argument("AbsValueObservation: dimension mismatch");
    out.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = std::fabs(x[j]);
}

void AbsValueObservation::guidance_gradient_into(const Vec& x, double proposal_std,
                                                 Vec& out) const {
    if (x.size() != y_.size())
        throw std::invalid_argument("AbsValueObservation: dimension mismatch");
    if (!(proposal_std > 0.0))
        throw std::invalid_argument("AbsValueObservation: proposal_std must be positive");
    const double var = proposal_std * proposal_std;
    out.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double sgn = (x[j] > 0.0) ? 1.0 : (x[j] < 0.0 ? -1.0 : 0.0);
        out[j] = sgn * (y_[j] - std::fabs(x[j])) / var;
    }
}

LinearMaskObservation::LinearMaskObservation(std::vector<std::uint8_t> mask, Vec y,
                                             double sigma_y)
    : mask_(std::move(mask)), y_(std::move(y)), sigma_y_(sigma_y) {
    if (mask_.empty()) throw std::invalid_argument("LinearMaskObservation: empty mask");
    if (!(sigma_y_ > 0.0))
        throw std::invalid_argument("LinearMaskObservation: sigma_y must be positive");
    const std::size_t kept = static_cast<std::size_t>(
        std::count_if(mask_.begin(), mask_.end(), [](std::uint8_t b) { return b != 0; }));
    if (kept == 0) throw std::invalid_argument("LinearMaskObservation: mask keeps nothing");
    if (kept != y_.size())
        throw std::invalid_argument("LinearMaskObservation: data length must match kept count");
}

void LinearMaskObservation::apply_into(const Vec& x, Vec& out) const {
    if (x.size() != mask_.size())
        throw std::invalid_argument("LinearMaskObservation: dimension mismatch");
    out.clear();
    out.reserve(y_.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        if (mask_[j]) out.push_back(x[j]);
}

void LinearMaskObservation::guidance_gradient_into(const Vec& x, double proposal_std,
                                                   Vec& out) const {
    if (x.size() != mask_.size())
        throw std::invalid_argument("LinearMaskObservation: dimension mismatch");
    if (!(proposal_std > 0.0))
        throw std::invalid_argument("LinearMaskObservation: proposal_std must be positive");
    const double var = proposal_std * proposal_std;
    out.assign(x.size(), 0.0);
    std::size_t k = 0;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (mask_[j]) {
            out[j] = (y_[k] - x[j]) / var;
            ++k;
        }
}

std::size_t argmax_log_likelihood(const Observation& obs, const std::vector<Vec>& candidates) {
    if (candidates.empty())
        throw std::invalid_argument("argmax_log_likelihood: empty candidate set");
    std::size_t best = 0;
    double best_ll = obs.log_likelihood(candidates[0]);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double ll = obs.log_likelihood(candidates[i]);
        if (ll > best_ll) {
            best = i;
            best_ll = ll;
        }
    }
    return best;
}

std::size_t argmin_measurement_error(const Observation& obs, const std::vector<Vec>& candidates) {
    if (candidates.empty())
        throw std::invalid_argument("argmin_measurement_error: empty candidate set");
    std::size_t best = 0;
    double best_err = obs.measurement_error(candidates[0]);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double err = obs.measurement_error(candidates[i]);
        if (err < best_err) {
            best = i;
            best_err = err;
        }
    }
    return best;
}

}  // namespace tgd
