#pragma once

#include <cstddef>
#include <functional>

namespace blankopt {

// Worker count from BLANKOPT_WORKERS, else the hardware concurrency.
unsigned worker_count();

// Runs fn(i) for i in [0, n) over a static partition. Every index is
// processed exactly once, so results that write only to slot i do not
// depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace blankopt
