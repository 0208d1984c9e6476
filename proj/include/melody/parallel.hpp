#pragma once

#include <cstddef>
#include <functional>

namespace melody {

// Worker cap shared by every parallel map in the process. Results never
// depend on this value: work is split by index and reduced in index order.
void set_thread_count(int n);
int thread_count();

// Calls fn(i) for i in [0, n). Each index is handled by exactly one worker;
// callers write results into per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace melody
