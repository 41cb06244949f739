#pragma once

#include <atomic>
#include <cstddef>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tgd {

// Number of threads parallel_for may use. Defaults from TGD_THREADS when set,
// otherwise the OpenMP default; always >= 1.
int thread_count() noexcept;

// n <= 0 restores the environment default.
void set_thread_count(int n) noexcept;

// Runs body(i) for i in [0, n). Iterations must be independent; any writes go
// to disjoint slots. Work is dispatched with a static schedule purely as a
// performance matter: results must not (and here cannot) depend on the thread
// count. Runs serially when one thread is configured or when already inside a
// parallel region; this serial path doubles as the reference implementation.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
#ifdef _OPENMP
    const int nt = thread_count();
    if (nt > 1 && n > 1 && !omp_in_parallel()) {
        std::exception_ptr err = nullptr;
        std::atomic<bool> failed{false};
#pragma omp parallel for schedule(static) num_threads(nt)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            if (failed.load(std::memory_order_relaxed)) continue;
            try {
                body(static_cast<std::size_t>(i));
            } catch (...) {
                if (!failed.exchange(true)) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) body(i);
}

// Serial loop with the same contract; used by tests and the benchmark as the
// baseline to compare the parallel dispatch against.
template <typename F>
void serial_for(std::size_t n, F&& body) {
    for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace tgd
