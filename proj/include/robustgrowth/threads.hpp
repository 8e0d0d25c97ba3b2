#pragma once

#include <cstdint>
#include <functional>

namespace rg {

// Worker count: ROBUSTGROWTH_THREADS if set (clamped to [1, 64]), else the
// hardware concurrency.
int thread_count();

// Run body(i) for i in [0, n) across thread_count() workers.  Work is split
// by contiguous blocks; the caller owns any per-index output slots, so
// results are independent of scheduling.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace rg
