#pragma once

// Matrix-free conjugate gradients on flat degree-of-freedom vectors.
//
// The operator must be self-adjoint and positive (semi-)definite with respect
// to the weighted inner product sum_i w_i a_i b_i. Dot products are reduced in
// fixed-size chunks combined in index order, so iterates do not depend on the
// number of workers.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mhd/grid.hpp"

namespace mhd {

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

using LinearOperator = std::function<void(std::span<const double> x, std::span<double> y)>;

/// Solves A x = b starting from the contents of x. Stops when the weighted
/// residual norm falls below rtol * |b| (or abs_floor).
CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b,
                            std::span<double> x, std::span<const double> weights, double rtol,
                            int max_iterations, double abs_floor = 0.0);

double weighted_dot(std::span<const double> a, std::span<const double> b,
                    std::span<const double> w);

/// Ordered list of (array, owned box) blocks flattened into one vector.
class DofMap {
 public:
  struct Block {
    Box box;
    Stagger stagger;
  };

  DofMap() = default;
  explicit DofMap(std::vector<Block> blocks);

  /// Cells: all interior cells.
  static DofMap cells(const BoxGrid& g);
  /// Face components. With `fixed_wall_normals` the wall-normal boundary
  /// nodes are excluded (they carry prescribed values).
  static DofMap faces(const BoxGrid& g, bool fixed_wall_normals);

  std::size_t size() const { return size_; }
  std::size_t block_count() const { return blocks_.size(); }
  const Block& block(std::size_t b) const { return blocks_[b]; }

  void gather(std::span<const Array3* const> fields, std::span<double> out) const;
  void scatter(std::span<const double> in, std::span<Array3* const> fields) const;
  /// Trapezoid weights (1/2 per wall-node direction), times the cell volume.
  std::vector<double> weights(const BoxGrid& g) const;

 private:
  std::vector<Block> blocks_;
  std::vector<std::size_t> offsets_;
  std::size_t size_ = 0;
};

}  // namespace mhd
