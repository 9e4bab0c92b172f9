#pragma once

#include <cstddef>
#include <functional>

namespace vrebert {

// Worker count: hardware concurrency, capped by VREBERT_THREADS when set.
std::size_t worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. The first
// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vrebert
