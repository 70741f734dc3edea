#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace mhd {

using Index3 = std::array<int, 3>;

/// Half-open index box [lo, hi) in three dimensions.
struct Box {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};

  int extent(int d) const { return hi[d] - lo[d]; }
  std::size_t size() const {
    return static_cast<std::size_t>(std::max(0, extent(0))) * std::max(0, extent(1)) *
           std::max(0, extent(2));
  }
  bool contains(int i, int j, int k) const {
    return i >= lo[0] && i < hi[0] && j >= lo[1] && j < hi[1] && k >= lo[2] && k < hi[2];
  }
};

/// Dense 3D array with arbitrary (possibly negative) index origin, x fastest.
class Array3 {
 public:
  Array3() = default;
  explicit Array3(const Box& box, double value = 0.0)
      : box_(box),
        nx_(box.extent(0)),
        nxy_(static_cast<std::ptrdiff_t>(box.extent(0)) * box.extent(1)),
        data_(box.size(), value) {}

  double& operator()(int i, int j, int k) { return data_[offset(i, j, k)]; }
  double operator()(int i, int j, int k) const { return data_[offset(i, j, k)]; }

  const Box& box() const { return box_; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Array3& o) const { return box_.lo == o.box_.lo && box_.hi == o.box_.hi; }

 private:
  std::size_t offset(int i, int j, int k) const {
    assert(box_.contains(i, j, k));
    return static_cast<std::size_t>((static_cast<std::ptrdiff_t>(k - box_.lo[2]) * nxy_) +
                                    (static_cast<std::ptrdiff_t>(j - box_.lo[1]) * nx_) +
                                    (i - box_.lo[0]));
  }

  Box box_;
  std::ptrdiff_t nx_ = 0;
  std::ptrdiff_t nxy_ = 0;
  std::vector<double> data_;
};

}  // namespace mhd
