#pragma once

#include <vector>

#include "tis/grid.hpp"

namespace tis {

/// One user interaction: a full-resolution voxel and the category it belongs to.
struct Click {
  Voxel position;
  int category = 0;
  friend bool operator==(const Click&, const Click&) = default;
};

/// Ordered interactions; may mix categories.
using ClickSet = std::vector<Click>;

/// Axis-aligned box [lo, hi) in voxel coordinates.
struct Roi {
  Voxel lo;
  Voxel hi;

  Grid3 extents() const {
    return {static_cast<std::size_t>(hi.x - lo.x), static_cast<std::size_t>(hi.y - lo.y),
            static_cast<std::size_t>(hi.z - lo.z)};
  }
  bool contains(const Voxel& v) const {
    return v.x >= lo.x && v.y >= lo.y && v.z >= lo.z && v.x < hi.x && v.y < hi.y && v.z < hi.z;
  }
  static Roi full(const Grid3& g) {
    return {{0, 0, 0},
            {static_cast<std::int64_t>(g.nx), static_cast<std::int64_t>(g.ny),
             static_cast<std::int64_t>(g.nz)}};
  }
  friend bool operator==(const Roi&, const Roi&) = default;
};

}  // namespace tis
