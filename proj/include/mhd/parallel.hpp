#pragma once

// Loop and reduction helpers for the OpenMP kernels.
//
// Element-wise loops write disjoint outputs, so their results do not depend on
// the thread count. Reductions accumulate one partial per k-slab (summed in
// j,i order) and then combine the slabs serially in k order; the summation
// order is therefore fixed regardless of how many workers run.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mhd/array3.hpp"

namespace mhd {

template <class F>
void for_each_index(const Box& b, F&& f) {
  const int k0 = b.lo[2], k1 = b.hi[2], j0 = b.lo[1], j1 = b.hi[1];
  const int i0 = b.lo[0], i1 = b.hi[0];
#pragma omp parallel for collapse(2) schedule(static)
  for (int k = k0; k < k1; ++k)
    for (int j = j0; j < j1; ++j)
      for (int i = i0; i < i1; ++i) f(i, j, k);
}

template <class F>
double sum_over(const Box& b, F&& f) {
  const int nk = b.extent(2);
  if (nk <= 0 || b.extent(1) <= 0 || b.extent(0) <= 0) return 0.0;
  std::vector<double> slab(static_cast<std::size_t>(nk), 0.0);
#pragma omp parallel for schedule(static)
  for (int kk = 0; kk < nk; ++kk) {
    const int k = b.lo[2] + kk;
    double s = 0.0;
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int i = b.lo[0]; i < b.hi[0]; ++i) s += f(i, j, k);
    slab[static_cast<std::size_t>(kk)] = s;
  }
  double total = 0.0;
  for (double s : slab) total += s;
  return total;
}

template <class F>
double max_over(const Box& b, F&& f) {
  const int nk = b.extent(2);
  double result = -std::numeric_limits<double>::infinity();
  if (nk <= 0 || b.extent(1) <= 0 || b.extent(0) <= 0) return result;
  std::vector<double> slab(static_cast<std::size_t>(nk), result);
#pragma omp parallel for schedule(static)
  for (int kk = 0; kk < nk; ++kk) {
    const int k = b.lo[2] + kk;
    double m = -std::numeric_limits<double>::infinity();
    for (int j = b.lo[1]; j < b.hi[1]; ++j)
      for (int i = b.lo[0]; i < b.hi[0]; ++i) m = std::max(m, f(i, j, k));
    slab[static_cast<std::size_t>(kk)] = m;
  }
  for (double m : slab) result = std::max(result, m);
  return result;
}

template <class F>
double min_over(const Box& b, F&& f) {
  return -max_over(b, [&](int i, int j, int k) { return -f(i, j, k); });
}

/// Number of OpenMP workers currently configured (1 without OpenMP).
int worker_count();
/// Sets the OpenMP worker count; no-op without OpenMP.
void set_worker_count(int n);

}  // namespace mhd
