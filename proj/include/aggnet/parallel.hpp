#pragma once

#include <cstddef>
#include <functional>

namespace aggnet {

/// Worker count for kernel parallelism: AGGNET_THREADS if set, otherwise
/// the hardware concurrency. Read once per process.
int thread_count();

/// Override the worker count (tests use this to compare 1 vs N threads).
void set_thread_count(int n);

/// Run body(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results never depend on the number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace aggnet
