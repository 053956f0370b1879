#pragma once

#include <functional>

namespace phylonbe {

// Runs fn(i) for i in [0, n) across up to `threads` workers. Work items must
// be independent; writes must go to disjoint slots. threads <= 1 runs inline.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// Hardware concurrency, capped by the NBE_THREADS environment variable.
int default_thread_count();

}  // namespace phylonbe
