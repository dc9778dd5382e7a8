#pragma once

#include <cstddef>
#include <functional>

namespace ectnet {

/// Worker count from ECTNET_THREADS, else the hardware concurrency (at least 1).
std::size_t default_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers write results to preassigned slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
/// Calls made from inside a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t threads = default_thread_count());

/// Keeps large freed blocks in the heap instead of returning them to the OS
/// (glibc only; no-op elsewhere). Executables call it once at startup.
void configure_allocator();

}  // namespace ectnet
