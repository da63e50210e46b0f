#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace svgg {

// Global switch between the OpenMP kernels and their serial references.
// Kernels are written so each index's result is computed independently and
// reductions happen in a fixed order, so both paths are bitwise identical.
void set_parallel_enabled(bool on);
bool parallel_enabled();

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <typename Fn>
void parallel_for(std::ptrdiff_t n, Fn&& fn) {
#ifdef _OPENMP
    if (parallel_enabled() && n > 1) {
        #pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
    }
#endif
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

template <typename Fn>
void serial_for(std::ptrdiff_t n, Fn&& fn) {
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
}

} // namespace svgg
