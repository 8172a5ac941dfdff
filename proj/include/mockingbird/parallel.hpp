#pragma once

// Batch parallelism. The hot loops in this project are embarrassingly
// parallel over traces; parallel_for runs them on OpenMP threads when
// workers > 1 and falls back to a plain serial loop otherwise. The serial
// path is the reference implementation: every caller writes results into
// per-index slots, so output is identical for any worker count.

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mockingbird {

inline int hardware_workers() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// body(i) must not throw across the loop boundary; batch drivers catch
// per-item errors inside the body and aggregate them afterwards.
template <typename Body>
void parallel_for(std::size_t n, int workers, Body&& body) {
#ifdef _OPENMP
    if (workers > 1 && n > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(workers)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            body(static_cast<std::size_t>(i));
        }
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) {
        body(i);
    }
}

}  // namespace mockingbird
