#include "tgd/parallel.hpp"

#include <cstdlib>

namespace tgd {

namespace {

int env_default() noexcept {
    if (const char* s = std::getenv("TGD_THREADS")) {
        const int v = std::atoi(s);
        if (v >= 1) return v;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

std::atomic<int> g_threads{0};  // 0 = not yet resolved

}  // namespace

int thread_count() noexcept {
    int v = g_threads.load(std::memory_order_relaxed);
    if (v == 0) {
        v = env_default();
        g_threads.store(v, std::memory_order_relaxed);
    }
    return v;
}

void set_thread_count(int n) noexcept {
    g_threads.store(n >= 1 ? n : env_default(), std::memory_order_relaxed);
}

}  // namespace tgd
