// SPDX-License-Identifier: Apache-2.0
// Deterministic chunked parallel_for: results are written to caller-owned
// storage indexed by i, so the merge is order-independent and the outcome is
// identical for any thread count.
#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace abflow {

template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(std::size_t(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += nt) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

// Global default used by the CLI --threads flag.
int default_threads();
void set_default_threads(int t);

}  // namespace abflow
