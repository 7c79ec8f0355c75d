#pragma once

#include <cstddef>
#include <functional>

namespace tigflow {

// Worker cap for parallel_for; 1 (the default) runs inline.
void set_worker_threads(int n);
[[nodiscard]] int worker_threads() noexcept;

// Calls fn(i) for i in [0, n). Each index must write only its own outputs, so
// results do not depend on the thread count. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tigflow
