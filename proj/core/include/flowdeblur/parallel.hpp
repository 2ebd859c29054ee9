#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>

namespace flowdeblur {

// Worker cap. Defaults to FLOWDEBLUR_THREADS when set, otherwise the hardware
// concurrency. set_num_threads(1) gives single-threaded execution.
int num_threads();
void set_num_threads(int n);

// Runs body(begin, end) over contiguous chunks of [0, count). Every index is
// visited exactly once; callers write disjoint outputs so the result does not
// depend on the schedule.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace flowdeblur
