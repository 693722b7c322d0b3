#pragma once

#include <functional>

namespace fcl {

// Caps the number of worker threads used by parallel sweeps (0 = hardware concurrency).
void set_worker_count(int n);
int worker_count();

// Runs body(i) for i in [0, n). Each index writes only its own output slot, so results do not depend
// on scheduling.
void parallel_for(int n, const std::function<void(int)>& body);

} // namespace fcl
