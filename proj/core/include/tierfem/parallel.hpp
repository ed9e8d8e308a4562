#pragma once

#include <cstddef>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

namespace tierfem {

/// Calls f(i) for i in [0, n). Callers keep writes disjoint so the result does
/// not depend on scheduling.
template <typename F>
void parallelFor(std::size_t n, F&& f, std::size_t grain = 64) {
  if (n == 0) return;
  if (n <= grain) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, grain), [&](const tbb::blocked_range<std::size_t>& r) {
    for (std::size_t i = r.begin(); i != r.end(); ++i) f(i);
  });
}

}  // namespace tierfem
