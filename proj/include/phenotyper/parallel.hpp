#pragma once

#include <cstddef>
#include <functional>

namespace phenotyper {

// Thread budget: min(hardware_concurrency, COHORT_PHENOTYPER_THREADS).
int max_threads();

// Runs fn(i) for i in [0, n); work is sliced across threads. Callers must
// write results into per-index slots so the outcome is independent of
// scheduling; reductions happen afterwards in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace phenotyper
