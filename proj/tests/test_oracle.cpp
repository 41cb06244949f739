#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "tgd/oracle.hpp"

using namespace tgd;

namespace {

GaussianMixturePrior toy_prior(std::uint64_t seed = 99) {
    RngStream rng(seed);
    auto means = sample_prior_means(2, 5, 0.1, rng);
    return make_mixture(2, std::vector<double>(5, 0.2), std::move(means), 0.005);
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("truncated normal moments, inverse-CDF branch") {
    // E[X | X > 2] and Var for the standard normal, frozen from 50-digit
    // quadrature.
    RngStream rng(101);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = truncated_normal_lower(0.0, 1.0, 2.0, rng);
        CHECK(x >= 2.0);
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double m_ref = 2.3732155328228408673;
    const double v_ref = 0.11427910041408125664;
    CHECK(std::fabs(mean - m_ref) < 4.0 * std::sqrt(v_ref / n));
    CHECK(var == doctest::Approx(v_ref).epsilon(0.03));
}

TEST_CASE("truncated normal moments, rejection branch") {
    // alpha = 10 exercises the exponential-rejection path.
    RngStream rng(103);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = truncated_normal_lower(0.0, 1.0, 10.0, rng);
        CHECK(x >= 10.0);
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double m_ref = 10.098093233962511963;
    const double v_ref = 0.0094453778256562611641;
    CHECK(std::fabs(mean - m_ref) < 4.0 * std::sqrt(v_ref / n));
    CHECK(var == doctest::Approx(v_ref).epsilon(0.03));
}

TEST_CASE("truncated normal handles location and scale") {
    RngStream rng(107);
    const int n = 50000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = truncated_normal_lower(3.0, 0.5, 4.0, rng);
        CHECK(x >= 4.0);
        sum += x;
    }
    // Standardized bound 2: mean = 3 + 0.5 * E[Z | Z > 2].
    const double expect = 3.0 + 0.5 * 2.3732155328228408673;
    CHECK(sum / n == doctest::Approx(expect).epsilon(0.002));
}

TEST_CASE("sign branch posterior normalizes over components and branches") {
    const auto p = toy_prior();
    const Vec y{0.3, 0.52};
    const auto post = build_sign_branch_posterior(p, y, 0.01);
    CHECK(post.dim == 2);
    CHECK(post.components() == 5);
    double total = 0.0;
    for (double lw : post.log_comp_w) total += std::exp(lw);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (double lp : post.log_pos_prob) CHECK(lp <= 0.0);
}

TEST_CASE("sign branch log_pdf differs from prior + likelihood by the evidence") {
    const auto p = toy_prior();
    const Vec y{0.3, 0.52};
    const double sigma = 0.05;
    const auto post = build_sign_branch_posterior(p, y, sigma);
    AbsValueObservation obs(y, sigma);
    RngStream rng(109);
    for (int i = 0; i < 20; ++i) {
        const Vec x = sample(post, rng);
        const double direct = log_pdf(p, x) + obs.log_likelihood(x) - post.log_evidence;
        CHECK(log_pdf(post, x) == doctest::Approx(direct).epsilon(1e-11));
    }
}

TEST_CASE("sign branch evidence matches grid quadrature") {
    const auto p = toy_prior();
    const Vec y{0.3, 0.52};
    const double sigma = 0.05;
    const auto post = build_sign_branch_posterior(p, y, sigma);
    AbsValueObservation obs(y, sigma);
    const auto grid = tempered_posterior_grid(p, obs, 1.0, -1.2, 1.2, 801);
    CHECK(grid_log_mass(grid) == doctest::Approx(post.log_evidence).epsilon(1e-6));
}

TEST_CASE("sign branch samples match the grid mean") {
    const auto p = toy_prior();
    const Vec y{0.3, 0.52};
    const double sigma = 0.05;
    const auto post = build_sign_branch_posterior(p, y, sigma);
    AbsValueObservation obs(y, sigma);
    const auto grid = tempered_posterior_grid(p, obs, 1.0, -1.2, 1.2, 801);
    const Vec gm = grid_mean(grid);

    RngStream rng(113);
    const auto xs = sample_many(post, 100000, rng);
    Vec mean(2, 0.0);
    for (const auto& x : xs)
        for (std::size_t j = 0; j < 2; ++j) mean[j] += x[j];
    for (std::size_t j = 0; j < 2; ++j) mean[j] /= double(xs.size());
    // Posterior std is bounded by ~1 per coordinate; give a 4-sigma MC band
    // plus grid truncation slack.
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::fabs(mean[j] - gm[j]) < 0.02);
}

TEST_CASE("symmetric component splits its branch mass evenly") {
    const auto p = make_mixture(2, {1.0}, {{0.0, 0.0}}, 0.3);
    const auto post = build_sign_branch_posterior(p, {0.4, 0.25}, 0.1);
    REQUIRE(post.components() == 1);
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(std::exp(post.log_pos_prob[j]) == doctest::Approx(0.5).epsilon(1e-12));
    // Branch means mirror each other.
    for (std::size_t j = 0; j < 2; ++j)
        CHECK(post.pos_mean[j] == doctest::Approx(-post.neg_mean[j]).epsilon(1e-12));
}

TEST_CASE("far negative observation still yields a proper posterior") {
    // y near zero with tight noise: both branches collapse toward 0 but the
    // object must stay normalized and sampleable.
    const auto p = make_mixture(1, {1.0}, {{0.8}}, 0.1);
    const auto post = build_sign_branch_posterior(p, {1e-4}, 1e-3);
    RngStream rng(127);
    for (int i = 0; i < 100; ++i) {
        const Vec x = sample(post, rng);
        CHECK(std::fabs(std::fabs(x[0]) - 1e-4) < 1e-2);
    }
}

TEST_CASE("tempering enters through sigma_eff") {
    const auto p = toy_prior();
    const Vec y{0.3, 0.52};
    // lambda = 0.25 has sigma_eff = sigma / sqrt(lambda) = 2 sigma.
    const auto tempered = build_sign_branch_posterior(p, y, 0.02);
    AbsValueObservation obs(y, 0.01);
    RngStream rng(131);
    // The quarter-power likelihood differs from the sigma_eff Gaussian by an
    // x-independent normalization, so the log-density gap must be constant.
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < 20; ++i) {
        const Vec x = sample(tempered, rng);
        const double gap = log_pdf(tempered, x) - (log_pdf(p, x) + 0.25 * obs.log_likelihood(x));
        lo = std::min(lo, gap);
        hi = std::max(hi, gap);
    }
    CHECK(hi - lo < 1e-9);
}

TEST_CASE("grid machinery: mass, mean, and indexing") {
    // Clean Gaussian bump centered at (0.2, -0.1): the grid mean must find it.
    const auto p = make_mixture(2, {1.0}, {{0.2, -0.1}}, 0.05);
    AbsValueObservation obs({0.0, 0.0}, 1.0);
    const auto g = tempered_posterior_grid(p, obs, 0.0, -1.0, 1.0, 501);
    CHECK(g.n == 501);
    CHECK(g.x(0) == -1.0);
    CHECK(g.x(500) == 1.0);
    CHECK(g.step() == doctest::Approx(2.0 / 500.0).epsilon(1e-15));
    // lambda = 0: pure prior, unit mass.
    CHECK(grid_log_mass(g) == doctest::Approx(0.0).epsilon(1e-8));
    const Vec m = grid_mean(g);
    CHECK(m[0] == doctest::Approx(0.2).epsilon(1e-8));
    CHECK(m[1] == doctest::Approx(-0.1).epsilon(1e-8));
}

TEST_CASE("grid requires two dimensions") {
    const auto p = make_mixture(1, {1.0}, {{0.0}}, 0.1);
    AbsValueObservation obs({0.0}, 1.0);
    CHECK_THROWS_AS(tempered_posterior_grid(p, obs, 1.0, -1.0, 1.0, 32),
                    std::invalid_argument);
}

TEST_CASE("sign branch rejects impossible inputs") {
    const auto p = toy_prior();
    CHECK_THROWS_AS(build_sign_branch_posterior(p, {0.3}, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(build_sign_branch_posterior(p, {0.3, 0.4}, 0.0), std::invalid_argument);
}

TEST_CASE("refined grid: normalization and cross-oracle quadrant masses") {
    const auto p = toy_prior();
    const Vec y = {0.31, 0.47};
    AbsValueObservation obs(y, 0.01);
    const auto g = grid_posterior(p, obs, -1.5, 1.5, 200, 8);
    CHECK(g.leaves() >= 200u * 200u);

    double total = 0.0;
    for (double m : g.mass) total += m;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(g.cdf.back() == 1.0);

    // Quadrant masses must agree with the closed-form sign-branch masses.
    // Given the component, coordinates are independent, so the quadrant mass
    // is a weighted product of per-coordinate branch masses.
    const auto sbp = build_sign_branch_posterior(p, y, 0.01);
    double grid_quads = 0.0;
    for (double qx : {1.0, -1.0})
        for (double qy : {1.0, -1.0}) {
            double analytic = 0.0;
            for (std::size_t k = 0; k < sbp.components(); ++k) {
                const double px = std::exp(sbp.log_pos_prob[k * 2 + 0]);
                const double py = std::exp(sbp.log_pos_prob[k * 2 + 1]);
                const double bx = qx > 0.0 ? px : 1.0 - px;
                const double by = qy > 0.0 ? py : 1.0 - py;
                analytic += std::exp(sbp.log_comp_w[k]) * bx * by;
            }
            const double got = grid_quadrant_mass(g, {qx, qy});
            grid_quads += got;
            CHECK(std::fabs(got - analytic) < 1e-3);
        }
    CHECK(grid_quads == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("grid sampling: jitter inside leaves, three uniforms per draw") {
    const auto p = toy_prior();
    AbsValueObservation obs({0.31, 0.47}, 0.01);
    const auto g = grid_posterior(p, obs, -1.5, 1.5, 120, 4);
    RngStream rng(7);
    const auto before = rng.counter();
    const Vec x = sample(g, rng);
    CHECK(rng.counter() == before + 3);
    CHECK(x[0] >= -1.5);
    CHECK(x[0] <= 1.5);

    // Sign frequencies against analytic quadrant masses, 4 sigma.
    const auto sbp = build_sign_branch_posterior(p, {0.31, 0.47}, 0.01);
    double analytic_pp = 0.0;
    for (std::size_t k = 0; k < sbp.components(); ++k)
        analytic_pp += std::exp(sbp.log_comp_w[k] + sbp.log_pos_prob[k * 2 + 0] +
                                sbp.log_pos_prob[k * 2 + 1]);
    const int n = 20000;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const Vec s = sample(g, rng);
        if (s[0] >= 0.0 && s[1] >= 0.0) ++hits;
    }
    const double freq = static_cast<double>(hits) / n;
    const double se = std::sqrt(analytic_pp * (1.0 - analytic_pp) / n) + 1e-4;
    CHECK(std::fabs(freq - analytic_pp) < 4.0 * se);
}

TEST_CASE("grid construction rejects bad boxes and parameters") {
    const auto p = toy_prior();
    AbsValueObservation obs({0.31, 0.47}, 0.01);
    // Prior modes live in [-0.9, 0.9]; a box this tight leaks mass through
    // its boundary and must be refused.
    CHECK_THROWS_AS(grid_posterior(p, obs, -0.05, 0.05, 64, 2), std::invalid_argument);
    CHECK_THROWS_AS(grid_posterior(p, obs, -1.5, 1.5, 3, 2), std::invalid_argument);
    CHECK_THROWS_AS(grid_posterior(p, obs, -1.5, 1.5, 64, 0), std::invalid_argument);
    CHECK_THROWS_AS(grid_posterior(p, obs, 1.5, -1.5, 64, 2), std::invalid_argument);
}

}  // TEST_SUITE
