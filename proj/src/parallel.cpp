#include "sargan/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace sargan {

namespace {

int initial_threads() {
    if (const char* env = std::getenv("SARGAN_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

std::atomic<int> g_max_threads{initial_threads()};

} // namespace

int max_threads() { return g_max_threads.load(); }

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& body) {
    const std::int64_t range = end - begin;
    if (range <= 0) return;
    const int threads = static_cast<int>(std::min<std::int64_t>(max_threads(), range));
    if (threads <= 1) {
        body(begin, end);
        return;
    }
    const std::int64_t chunk = (range + threads - 1) / threads;
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t) {
        const std::int64_t b = begin + t * chunk;
        const std::int64_t e = std::min(end, b + chunk);
        if (b >= e) break;
        workers.emplace_back(body, b, e);
    }
    body(begin, std::min(end, begin + chunk));
    for (auto& w : workers) w.join();
}

} // namespace sargan
