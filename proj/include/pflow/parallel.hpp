#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pflow {

inline std::size_t worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs fn(job) for job in [0, jobs) on a bounded pool. Callers write results
/// into per-job slots, so the outcome does not depend on scheduling. The
/// first exception thrown by any job is rethrown after all workers join.
inline void parallel_jobs(std::size_t jobs, const std::function<void(std::size_t)>& fn,
                          std::size_t max_workers = 0) {
    std::size_t workers = std::min(jobs, max_workers == 0 ? worker_count() : max_workers);
    if (workers <= 1) {
        for (std::size_t j = 0; j < jobs; ++j) fn(j);
        return;
    }
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            std::size_t job;
            {
                std::lock_guard lock(mu);
                if (next >= jobs || first_error) return;
                job = next++;
            }
            try {
                fn(job);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pflow
