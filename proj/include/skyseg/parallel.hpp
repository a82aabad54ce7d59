#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace skyseg::detail {

// Runs fn(block_index) for block_index in [0, blocks) across a small thread
// pool. Work is partitioned by block index, never by thread count, so any
// ordered combination of per-block results is bit-identical regardless of
// how many threads the host machine offers.
inline void parallel_blocks(size_t blocks, const std::function<void(size_t)>& fn) {
    if (blocks == 0) return;
    size_t threads = std::min<size_t>(blocks, std::max(1u, std::thread::hardware_concurrency()));
    if (threads <= 1) {
        for (size_t b = 0; b < blocks; ++b) fn(b);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                size_t b = next.fetch_add(1);
                if (b >= blocks) return;
                fn(b);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace skyseg::detail
