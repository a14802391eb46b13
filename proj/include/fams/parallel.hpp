#pragma once

#include <cstdint>
#include <cstdlib>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace fams::par {

// Thread count used by the parallel kernels. FAMS_THREADS overrides the
// OpenMP default so experiment configs stay portable across machines.
inline int max_threads() {
    if (const char* env = std::getenv("FAMS_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Parallel loop over [0, n). Every iteration must write only to its own
// output slot; with that discipline results are bitwise identical to the
// serial loop for any thread count.
template <class Body>
void parallel_for(std::int64_t n, Body&& body) {
    const int threads = max_threads();
    if (threads <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) body(i);
#else
    for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace fams::par
