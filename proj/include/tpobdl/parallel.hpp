#pragma once

#include <cstddef>
#include <functional>

namespace tpobdl {

/// Caps the worker count used by parallel_for (0 = hardware concurrency).
void set_thread_count(int threads);
int thread_count();

/// Runs body(i) for i in [0, n). Each index is handled exactly once and
/// bodies must only write to slots owned by their index, so results do not
/// depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tpobdl
