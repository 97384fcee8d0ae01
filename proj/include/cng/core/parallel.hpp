#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace cng {

// Worker cap from CNG_WORKERS, else the number of hardware threads (>= 1).
std::size_t worker_count();

// Runs fn(i) for i in [0, n) over a static partition of contiguous blocks.
// Results must be written to per-index slots so output is independent of
// the worker count. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t workers = 0);

}  // namespace cng
