#pragma once

#include <cstddef>
#include <functional>

namespace deepshore {

/// Worker count from DEEPSHORE_THREADS (0 or unset = hardware concurrency).
unsigned worker_count();

/// Runs body(i) for i in [0, n) over contiguous chunks. Each index must write
/// only its own output slot so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace deepshore
