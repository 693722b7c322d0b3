#include "fcl/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace fcl {

namespace {
std::atomic<int> g_workers{1};
}

void set_worker_count(int n)
{
    if (n <= 0)
        n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    g_workers = n;
}

int worker_count() { return g_workers; }

void parallel_for(int n, const std::function<void(int)>& body)
{
    const int w = std::min(worker_count(), n);
    if (w <= 1) {
        for (int i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!err)
                        err = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    if (err)
        std::rethrow_exception(err);
}

} // namespace fcl
