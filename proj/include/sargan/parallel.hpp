#pragma once

#include <cstdint>
#include <functional>

namespace sargan {

// Worker thread cap for parallel_for. Initialized from SARGAN_THREADS when
// set, otherwise from std::thread::hardware_concurrency().
int max_threads();
void set_max_threads(int n);

// Splits [begin, end) into at most max_threads() contiguous chunks and runs
// body(chunk_begin, chunk_end) on each. Every index is processed by exactly
// one thread and each chunk runs its own indices in ascending order, so any
// computation whose outer loop iterations are independent produces
// bit-identical results for every thread count, including 1.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t, std::int64_t)>& body);

} // namespace sargan
