#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace agediff {

// Worker cap: AGESTRUCT_THREADS when set, else hardware concurrency.
inline int worker_count(int n_tasks) {
    int cap = 0;
    if (const char* env = std::getenv("AGESTRUCT_THREADS")) {
        cap = std::atoi(env);
        if (cap < 1) cap = 1;
    } else {
        cap = static_cast<int>(std::thread::hardware_concurrency());
        if (cap < 1) cap = 1;
        if (cap > 8) cap = 8;
    }
    return std::min(cap, n_tasks);
}

// Runs fn(0..n-1) across workers. Tasks write only to their own slot, so
// results are deterministic regardless of the worker count.
inline void parallel_for_indexed(int n, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    int workers = worker_count(n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

}  // namespace agediff
