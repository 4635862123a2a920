#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sv {

enum class Exec { Serial, Par };

// Runs f(i) for i in [0, n). In Par mode f(i) must only write state owned by
// index i; any cross-index merge happens after the loop, in index order, so
// Serial and Par produce identical bits.
template <class F>
void for_each_index(Exec ex, std::int64_t n, F&& f) {
#ifdef _OPENMP
  if (ex == Exec::Par) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
#else
  (void)ex;
#endif
  for (std::int64_t i = 0; i < n; ++i) f(i);
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sv
