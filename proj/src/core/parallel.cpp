#include "gsp/core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace gsp {

namespace {
std::atomic<int> g_workers{0};
}

void set_worker_count(int n) { g_workers.store(n); }

int worker_count() {
    int n = g_workers.load();
    if (n > 0)
        return n;
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

void parallel_chunks(int64_t begin, int64_t end,
                     const std::function<void(int64_t, int64_t, int)>& fn) {
    int64_t count = end - begin;
    if (count <= 0)
        return;
    int nthreads = static_cast<int>(std::min<int64_t>(worker_count(), count));
    if (nthreads <= 1) {
        fn(begin, end, 0);
        return;
    }
    int64_t chunk = (count + nthreads - 1) / nthreads;
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        int64_t lo = begin + t * chunk;
        int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back([&fn, lo, hi, t] { fn(lo, hi, t); });
    }
    for (auto& th : pool)
        th.join();
}

void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t)>& fn) {
    parallel_chunks(begin, end, [&fn](int64_t lo, int64_t hi, int) {
        for (int64_t i = lo; i < hi; ++i)
            fn(i);
    });
}

} // namespace gsp
