#pragma once

#include <cstddef>
#include <functional>

namespace crowdkit {

// Worker cap for internal data parallelism. Defaults to 1 (serial); the
// CROWDKIT_THREADS environment variable raises it process-wide.
int max_threads();
void set_max_threads(int n);

// Runs fn(i) for i in [begin, end). Tasks must write disjoint memory;
// results are then identical for any worker count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

}  // namespace crowdkit
