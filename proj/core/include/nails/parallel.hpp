#pragma once

#include <functional>

#include "nails/types.hpp"

namespace nails {

/// Worker count: NAILS_THREADS if set (minimum 1), else hardware concurrency.
int worker_threads();

/// Chunked parallel map over [0, n). `body` must only write to slots owned by
/// its index, so the result is identical for any partition. Runs serially for
/// small n or a single worker.
void parallel_for(Index n, const std::function<void(Index)>& body);

}  // namespace nails
