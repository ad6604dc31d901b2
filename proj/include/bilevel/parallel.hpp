#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace bdl {

/// Worker cap: min(hardware, BDL_THREADS). At least 1.
inline int worker_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("BDL_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
}

/// Runs fn(begin, end) over fixed chunks of [0, n). Chunking is independent of
/// the worker count, so any per-chunk outputs merge deterministically.
inline void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    int workers = worker_count();
    if (workers == 1 || n < 2048) {
        fn(0, n);
        return;
    }
    std::size_t chunk = std::max<std::size_t>(1024, n / (4 * static_cast<std::size_t>(workers)));
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t b = 0; b < n; b += chunk) ranges.emplace_back(b, std::min(b + chunk, n));

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= ranges.size()) break;
            fn(ranges[i].first, ranges[i].second);
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
}

/// Deterministic map-reduce: partials are produced per fixed chunk and merged
/// in chunk order regardless of scheduling.
template <class T>
T parallel_reduce(std::size_t n, const T& init,
                  const std::function<T(std::size_t, std::size_t)>& map,
                  const std::function<T(const T&, const T&)>& merge) {
    if (n == 0) return init;
    int workers = worker_count();
    if (workers == 1 || n < 2048) return merge(init, map(0, n));
    std::size_t chunk = std::max<std::size_t>(1024, n / (4 * static_cast<std::size_t>(workers)));
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t b = 0; b < n; b += chunk) ranges.emplace_back(b, std::min(b + chunk, n));
    std::vector<T> partial(ranges.size(), init);

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= ranges.size()) break;
            partial[i] = map(ranges[i].first, ranges[i].second);
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    T acc = init;
    for (const T& p : partial) acc = merge(acc, p);
    return acc;
}

}  // namespace bdl
