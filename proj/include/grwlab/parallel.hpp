#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace grwlab {

/// Resolves a requested width; 0 means "all hardware threads".
inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n_tasks) on up to `width` threads. Tasks must write
/// only to their own slot; callers reduce in index order afterwards. If any
/// task throws, the exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n_tasks, unsigned width, Fn&& fn) {
    if (n_tasks == 0) return;
    width = std::max(1u, width);
    if (width == 1 || n_tasks == 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n_tasks);
    std::atomic<std::size_t> next{0};
    {
        std::vector<std::jthread> pool;
        const auto n_threads = std::min<std::size_t>(width, n_tasks);
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace grwlab
