#pragma once

#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ipgp {

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Contiguous [begin, end) ranges. Reductions over per-chunk accumulators are
// merged in chunk order, which keeps results deterministic for a fixed part
// count; with parts == 1 the result is bit-identical to a plain serial loop.
inline std::vector<std::pair<int, int>> chunk_ranges(int n, int parts) {
  if (parts < 1) parts = 1;
  if (parts > n) parts = n > 0 ? n : 1;
  std::vector<std::pair<int, int>> ranges;
  ranges.reserve(static_cast<std::size_t>(parts));
  const int base = parts > 0 ? n / parts : 0;
  const int extra = parts > 0 ? n % parts : 0;
  int begin = 0;
  for (int p = 0; p < parts; ++p) {
    const int len = base + (p < extra ? 1 : 0);
    ranges.emplace_back(begin, begin + len);
    begin += len;
  }
  return ranges;
}

}  // namespace ipgp
