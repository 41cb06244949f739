// Times the OpenMP population loop against the serial reference on the hot
// kernel (per-particle posterior reconstruction). Run with varying
// TGD_THREADS to see scaling; prints one line per configuration.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tgd/parallel.hpp"
#include "tgd/prior.hpp"
#include "tgd/rng.hpp"

using namespace tgd;

namespace {

double time_ms(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t n = 1 << 14;
    std::size_t reps = 20;
    if (argc > 1) n = std::stoull(argv[1]);
    if (argc > 2) reps = std::stoull(argv[2]);

    RngStream rng(42);
    auto means = sample_prior_means(2, 5, 0.1, rng);
    const auto prior = make_mixture(2, std::vector<double>(5, 0.2), std::move(means), 0.005);

    std::vector<Vec> z(n, Vec(2));
    for (auto& p : z) {
        p[0] = rng.uniform(-2.0, 2.0);
        p[1] = rng.uniform(-2.0, 2.0);
    }
    const double s = 0.7;

    std::vector<Vec> out_serial(n, Vec(2)), out_parallel(n, Vec(2));
    auto kernel = [&](std::vector<Vec>& out, std::size_t i) {
        denoised_mean_into(prior, z[i], s, out[i]);
    };

    double serial_ms = 0.0, parallel_ms = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        serial_ms += time_ms([&] { serial_for(n, [&](std::size_t i) { kernel(out_serial, i); }); });
        parallel_ms +=
            time_ms([&] { parallel_for(n, [&](std::size_t i) { kernel(out_parallel, i); }); });
    }
    serial_ms /= static_cast<double>(reps);
    parallel_ms /= static_cast<double>(reps);

    double max_diff = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const double d = std::fabs(out_serial[i][j] - out_parallel[i][j]);
            if (d > max_diff) max_diff = d;
        }

    std::printf("n=%zu reps=%zu threads=%d serial=%.3fms parallel=%.3fms speedup=%.2fx max_diff=%g\n",
                n, reps, thread_count(), serial_ms, parallel_ms,
                parallel_ms > 0.0 ? serial_ms / parallel_ms : 0.0, max_diff);
    return max_diff == 0.0 ? 0 : 1;
}
