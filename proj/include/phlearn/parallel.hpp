#pragma once

#include <cstddef>
#include <functional>

namespace phl {

/// Worker count: hardware concurrency capped by PHLEARN_THREADS when set.
int worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// is handled exactly once; the first exception is rethrown after joining.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace phl
