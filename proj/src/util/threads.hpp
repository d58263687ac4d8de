#ifndef DREAMPAST_THREADS_HPP
#define DREAMPAST_THREADS_HPP

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace dreampast {

inline int worker_count() {
    if (const char* env = std::getenv("DREAMPAST_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? int(hc) : 1;
}

// Run fn(i) for i in [0,n). Each index is independent and writes only its
// own output slot, so the result is identical for any worker count.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    int workers = worker_count();
    if (workers <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    int use = int(std::min<size_t>(size_t(workers), n));
    pool.reserve(use);
    for (int w = 0; w < use; ++w) {
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace dreampast

#endif
