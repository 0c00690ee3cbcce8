#pragma once

#include <cstddef>
#include <functional>

namespace cml {

/// Worker bound from the CML_THREADS environment variable (>= 1; 1 when
/// unset or invalid).
int env_threads();

/// Runs fn(0..n-1) on up to `threads` workers. Work is handed out by index,
/// so callers that write result[i] get the same output for any thread
/// count. The first exception thrown by a worker is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace cml
