#pragma once
// Index-parallel loop with deterministic, per-index results.

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mmerge {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index is
/// processed exactly once; the first exception is rethrown after joining.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
    threads = std::max(1, std::min<int>(threads, static_cast<int>(count)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += threads) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(mu);
                    if (!first) first = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

}  // namespace mmerge
