#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tgd/math.hpp"

namespace tgd {

// Measurement model y = A(x0) + sigma_y * eps with isotropic Gaussian noise.
// Implementations supply the forward map and the gradient of the Gaussian
// log-likelihood in x; everything else derives from those.
class Observation {
  public:
    virtual ~Observation() = default;

    virtual std::size_t signal_dim() const noexcept = 0;
    virtual const Vec& data() const noexcept = 0;
    virtual double noise_std() const noexcept = 0;
    virtual std::string tag() const = 0;

    virtual void apply_into(const Vec& x, Vec& out) const = 0;

    // grad_x log N(y; A(x), proposal_std^2 I) evaluated at x.
    virtual void guidance_gradient_into(const Vec& x, double proposal_std, Vec& out) const = 0;

    Vec apply(const Vec& x) const;
    Vec guidance_gradient(const Vec& x, double proposal_std) const;

    // log N(y; A(x0), sigma_y^2 I)
    double log_likelihood(const Vec& x0) const;

    // lambda * log_likelihood, with lambda = 0 giving exactly 0 even when the
    // likelihood itself is degenerate.
    double tempered_log_likelihood(const Vec& x0, double lambda) const;

    // Likelihood under an inflated noise scale, used while guiding at noise
    // level s: std = gamma * s + sigma_y.
    double proposal_log_likelihood(const Vec& x, double s, double gamma) const;

    // ||A(x0) - y||^2
    double measurement_error(const Vec& x0) const;
};

// A(x) = |x| elementwise; signal and observation dimensions coincide.
// The likelihood gradient at x uses d|x|/dx = sign(x) with sign(0) = 0.
class AbsValueObservation final : public Observation {
  public:
    AbsValueObservation(Vec y, double sigma_y);

    std::size_t signal_dim() const noexcept override { return y_.size(); }
    const Vec& data() const noexcept override { return y_; }
    double noise_std() const noexcept override { return sigma_y_; }
    std::string tag() const override { return "abs"; }

    void apply_into(const Vec& x, Vec& out) const override;
    void guidance_gradient_into(const Vec& x, double proposal_std, Vec& out) const override;

  private:
    Vec y_;
    double sigma_y_;
};

// A(x) keeps the coordinates where mask is nonzero, in order. y holds one
// entry per kept coordinate.
class LinearMaskObservation final : public Observation {
  public:
    LinearMaskObservation(std::vector<std::uint8_t> mask, Vec y, double sigma_y);

    std::size_t signal_dim() const noexcept override { return mask_.size(); }
    const Vec& data() const noexcept override { return y_; }
    double noise_std() const noexcept override { return sigma_y_; }
    std::string tag() const override { return "mask"; }
    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }

    void apply_into(const Vec& x, Vec& out) const override;
    void guidance_gradient_into(const Vec& x, double proposal_std, Vec& out) const override;

  private:
    std::vector<std::uint8_t> mask_;
    Vec y_;
    double sigma_y_;
};

// Index of the candidate with the largest log-likelihood (ties -> lowest
// index). Identical ranking to argmin_measurement_error for a shared noise
// scale since the log-likelihood is monotone in the residual norm.
std::size_t argmax_log_likelihood(const Observation& obs, const std::vector<Vec>& candidates);
std::size_t argmin_measurement_error(const Observation& obs, const std::vector<Vec>& candidates);

}  // namespace tgd
