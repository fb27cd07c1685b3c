#pragma once

// Deterministic work partitioning. Items are split into contiguous chunks,
// one task per chunk; callers must write results into per-item or per-chunk
// slots and reduce sequentially in chunk order afterwards. Combined with
// counter-based randomness this makes results independent of thread count.

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace pacbayes {

// Runs fn(begin, end) over a partition of [0, n). threads <= 1 runs inline.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 1) {
        fn(0, n);
        return;
    }
    std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::size_t chunk = (n + nt - 1) / nt;
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        std::size_t b = t * chunk;
        std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back(fn, b, e);
    }
    for (auto& th : pool) th.join();
}

} // namespace pacbayes
