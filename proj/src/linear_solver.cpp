#include "mhd/linear_solver.hpp"

#include <cmath>
#include <stdexcept>

#include "mhd/parallel.hpp"

namespace mhd {

namespace {
constexpr std::size_t kChunk = 4096;

template <class F>
double chunked_sum(std::size_t n, F&& term) {
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
  const auto nc = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = std::min(n, lo + kChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += term(i);
    partial[static_cast<std::size_t>(c)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

template <class F>
void parallel_apply(std::size_t n, F&& f) {
  const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < nn; ++i) f(static_cast<std::size_t>(i));
}
}  // namespace

double weighted_dot(std::span<const double> a, std::span<const double> b,
                    std::span<const double> w) {
  return chunked_sum(a.size(), [&](std::size_t i) { return w[i] * a[i] * b[i]; });
}

CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b,
                            std::span<double> x, std::span<const double> w, double rtol,
                            int max_iterations, double abs_floor) {
  const std::size_t n = b.size();
  if (x.size() != n || w.size() != n) throw std::invalid_argument("conjugate_gradient: size mismatch");
  CgResult res;
  const double bnorm = std::sqrt(weighted_dot(b, b, w));
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  std::vector<double> r(n), p(n), ap(n);
  apply(x, ap);
  parallel_apply(n, [&](std::size_t i) { r[i] = b[i] - ap[i]; });
  p = r;
  double rr = weighted_dot(r, r, w);
  const double target = std::max(rtol * bnorm, abs_floor);
  for (int it = 0; it < max_iterations; ++it) {
    if (std::sqrt(rr) <= target) {
      res.iterations = it;
      res.relative_residual = std::sqrt(rr) / bnorm;
      res.converged = true;
      return res;
    }
    apply(p, ap);
    const double pap = weighted_dot(p, ap, w);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    parallel_apply(n, [&](std::size_t i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    });
    const double rr_new = weighted_dot(r, r, w);
    const double beta = rr_new / rr;
    rr = rr_new;
    parallel_apply(n, [&](std::size_t i) { p[i] = r[i] + beta * p[i]; });
    res.iterations = it + 1;
  }
  res.relative_residual = std::sqrt(rr) / bnorm;
  res.converged = std::sqrt(rr) <= target;
  return res;
}

DofMap::DofMap(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  offsets_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    offsets_.push_back(size_);
    size_ += b.box.size();
  }
}

DofMap DofMap::cells(const BoxGrid& g) { return DofMap({{g.cells(), kCellStagger}}); }

DofMap DofMap::faces(const BoxGrid& g, bool fixed_wall_normals) {
  std::vector<Block> blocks;
  for (int d = 0; d < 3; ++d) {
    const Stagger s = face_stagger(d);
    Box box = g.owned(s);
    if (fixed_wall_normals && g.wall(d)) {
      box.lo[d] = 1;
      box.hi[d] = g.n[d];
    }
    blocks.push_back({box, s});
  }
  return DofMap(std::move(blocks));
}

void DofMap::gather(std::span<const Array3* const> fields, std::span<double> out) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Box& box = blocks_[b].box;
    const Array3& a = *fields[b];
    const std::size_t base = offsets_[b];
    const int nx = box.extent(0), ny = box.extent(1);
    for_each_index(box, [&](int i, int j, int k) {
      const std::size_t idx = base + static_cast<std::size_t>(
                                         ((k - box.lo[2]) * ny + (j - box.lo[1])) * nx + (i - box.lo[0]));
      out[idx] = a(i, j, k);
    });
  }
}

void DofMap::scatter(std::span<const double> in, std::span<Array3* const> fields) const {
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Box& box = blocks_[b].box;
    Array3& a = *fields[b];
    const std::size_t base = offsets_[b];
    const int nx = box.extent(0), ny = box.extent(1);
    for_each_index(box, [&](int i, int j, int k) {
      const std::size_t idx = base + static_cast<std::size_t>(
                                         ((k - box.lo[2]) * ny + (j - box.lo[1])) * nx + (i - box.lo[0]));
      a(i, j, k) = in[idx];
    });
  }
}

std::vector<double> DofMap::weights(const BoxGrid& g) const {
  std::vector<double> w(size_);
  const double vol = g.cell_volume();
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Box& box = blocks_[b].box;
    const Stagger s = blocks_[b].stagger;
    std::size_t idx = offsets_[b];
    for (int k = box.lo[2]; k < box.hi[2]; ++k)
      for (int j = box.lo[1]; j < box.hi[1]; ++j)
        for (int i = box.lo[0]; i < box.hi[0]; ++i) w[idx++] = vol * g.node_weight(s, i, j, k);
  }
  return w;
}

}  // namespace mhd
