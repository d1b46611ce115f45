#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace semrag {

/// Applies fn(index) for index in [0, count) on up to max_threads workers.
/// fn must not throw; callers that need per-item failure reporting return it
/// through their result slot. Results keep input order by construction.
inline void parallel_for(std::size_t count, int max_threads, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    int workers = max_threads;
    if (workers < 1) workers = 1;
    if (static_cast<std::size_t>(workers) > count) workers = static_cast<int>(count);
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace semrag
