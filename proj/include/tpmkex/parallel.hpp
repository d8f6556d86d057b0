// Work-stealing loop over independent trials. Results keyed by trial index
// stay deterministic regardless of the worker count.

#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace tpmkex {

inline void parallel_trials(long count, int jobs,
                            const std::function<void(long)>& body) {
    if (jobs <= 0)
        jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    if (jobs == 1 || count <= 1) {
        for (long i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<long> next{0};
    std::atomic<bool> aborted{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const long i = next.fetch_add(1);
            if (i >= count || aborted.load()) return;
            try {
                body(i);
            } catch (...) {
                {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
                aborted.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace tpmkex
