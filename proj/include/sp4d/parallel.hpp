#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace sp4d {

// Static contiguous partition of [0, n) across `threads` workers. Chunk
// boundaries depend only on (n, threads), so any writer that owns its range
// produces thread-count-independent results.
template <typename Fn>
void parallel_chunks(size_t n, int threads, Fn&& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n <= 1) {
        fn(size_t{0}, n);
        return;
    }
    size_t workers = std::min<size_t>(threads, n);
    size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        size_t begin = w * chunk;
        size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace sp4d
