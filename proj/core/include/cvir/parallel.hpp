#pragma once

#include <cstddef>
#include <functional>

namespace cvir {

/// Worker count used by parallel_for when the caller passes 0.
/// Defaults to std::thread::hardware_concurrency().
std::size_t default_thread_count();
void set_default_thread_count(std::size_t n);

/// Runs body(i) for i in [0, n) on up to `threads` workers using static
/// contiguous chunks. Callers write results into per-index slots, so the
/// outcome never depends on the worker count. The first exception thrown by
/// any body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = 0);

}  // namespace cvir
