#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace openhall {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Work items are pulled
// from a shared counter; callers write into index-addressed slots so the
// result never depends on scheduling. The first exception is rethrown.
template <class Fn>
void parallel_for(long n, int workers, Fn&& fn) {
    if (n <= 0) return;
    const int nw = static_cast<int>(std::clamp<long>(workers < 1 ? 1 : workers, 1, n));
    if (nw == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto body = [&] {
        for (;;) {
            const long i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(nw);
    for (int w = 0; w < nw; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace openhall
