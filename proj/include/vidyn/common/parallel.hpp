#pragma once

#include <cstddef>
#include <functional>

namespace vidyn {

// Runs fn(i) for every i in [0, n). With n_threads <= 1 (the default
// everywhere) the loop runs inline on the caller's thread. With more threads
// the index range is split into contiguous chunks, one worker per chunk.
// Callers must write only to slots addressed by i, so the result is the same
// for any thread count; any cross-slot reduction happens after this returns,
// in index order.
void parallel_for(std::size_t n, std::size_t n_threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace vidyn
