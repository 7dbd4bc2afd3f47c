#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace specfed {

/// Worker cap: SPECFED_THREADS if set, otherwise hardware concurrency.
inline unsigned max_threads() {
    if (const char* env = std::getenv("SPECFED_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

/// Runs f(i) for i in [0, n). Results must be written to preallocated,
/// index-owned slots; combined with per-index derived RNG streams this makes
/// every parallel loop schedule-independent.
template <typename F>
void parallel_for(std::size_t n, F&& f, unsigned thread_cap = 0) {
    if (n == 0) return;
    unsigned workers = thread_cap ? std::min(thread_cap, max_threads()) : max_threads();
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = static_cast<std::size_t>(w) * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &f] {
            for (std::size_t i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace specfed
