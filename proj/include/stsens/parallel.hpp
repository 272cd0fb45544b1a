#pragma once

#include <functional>

namespace stsens {

// Worker-thread cap shared by every data-parallel loop. 0 means "all
// hardware threads". The STSENS_THREADS environment variable (read once at
// startup by init_threads_from_env) lowers it.
void set_max_threads(int n);
int max_threads();
void init_threads_from_env();

// Runs fn(i) for i in [0, n). Iterations must be independent; any reduction
// happens in the caller afterwards, in index order, so results do not depend
// on the schedule or the thread count.
void parallel_for(int n, const std::function<void(int)>& fn);

// Serial reference path: same contract, plain loop. Kept so tests and the
// benchmark can compare the two executions bit for bit.
void serial_for(int n, const std::function<void(int)>& fn);

}  // namespace stsens
