#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace roughskew::parallel {

// Worker-count resolution: explicit request, else ROUGHSKEW_THREADS, else 1.
inline int resolve_threads(int requested) {
    if (requested >= 1) return requested;
    if (const char* env = std::getenv("ROUGHSKEW_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 4096) return static_cast<int>(v);
    }
    return 1;
}

// Runs fn(block_index) for block_index in [0, n_blocks).  Blocks are claimed
// dynamically, so callers must write results into per-block slots and combine
// them in block order afterwards: outcomes then never depend on scheduling.
inline void for_blocks(std::size_t n_blocks, int threads,
                       const std::function<void(std::size_t)>& fn) {
    if (n_blocks == 0) return;
    const int t = std::min<std::size_t>(std::max(threads, 1), n_blocks);
    if (t <= 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) fn(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                fn(b);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace roughskew::parallel
