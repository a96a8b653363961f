#pragma once

#include <cstddef>
#include <functional>

namespace grasp {

// Worker count: hardware concurrency, capped by the GRASP_THREADS environment
// variable when it is set to a positive integer.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Each index is handled exactly once; callers
// write results into per-index slots so the outcome does not depend on
// scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace grasp
