#pragma once

#include <cstdint>
#include <functional>

namespace descatter3d {

// Process-wide worker count for parallel_for. 1 (the default) runs inline.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [0, n). Iterations must write disjoint outputs; every
// iteration is a self-contained serial computation, so results are bitwise
// identical for any worker count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace descatter3d
