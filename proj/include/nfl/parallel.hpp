#pragma once
#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nfl {

inline std::size_t default_thread_count()
{
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/**
 * Calls fn(i) for i in [0, count) on up to `threads` workers. Each index is handled
 * exactly once; callers write results into slot i so output order never depends on
 * scheduling. The first exception thrown by fn is rethrown after all workers join.
 */
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn)
{
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
}

} // namespace nfl
