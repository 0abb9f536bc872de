#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace semgrasp {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Work items must be
/// independent; callers that need determinism give each item its own seeded
/// rng stream so the result does not depend on scheduling.
inline void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    workers = int(std::min<int64_t>(workers, n));
    std::atomic<int64_t> next{0};
    std::vector<std::thread> threads;
    std::exception_ptr err;
    std::mutex err_mu;
    threads.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                const int64_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (err) std::rethrow_exception(err);
}

inline int default_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

}  // namespace semgrasp
