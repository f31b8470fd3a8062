#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace tis {

/// Integer voxel coordinate.
struct Voxel {
  std::int64_t x = 0, y = 0, z = 0;
  friend bool operator==(const Voxel&, const Voxel&) = default;
};

/// Extents of a 3-D grid. Linear index of (x, y, z) is x + nx * (y + ny * z),
/// i.e. row-major with x fastest. This order is used by every volume, mask,
/// feature grid and token sequence in the project.
struct Grid3 {
  std::size_t nx = 0, ny = 0, nz = 0;

  std::size_t numel() const noexcept { return nx * ny * nz; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + nx * (y + ny * z);
  }
  std::size_t index(const Voxel& v) const noexcept {
    return index(static_cast<std::size_t>(v.x), static_cast<std::size_t>(v.y),
                 static_cast<std::size_t>(v.z));
  }
  Voxel voxel(std::size_t i) const noexcept {
    return {static_cast<std::int64_t>(i % nx), static_cast<std::int64_t>((i / nx) % ny),
            static_cast<std::int64_t>(i / (nx * ny))};
  }
  bool contains(const Voxel& v) const noexcept {
    return v.x >= 0 && v.y >= 0 && v.z >= 0 && static_cast<std::size_t>(v.x) < nx &&
           static_cast<std::size_t>(v.y) < ny && static_cast<std::size_t>(v.z) < nz;
  }
  bool all_even() const noexcept { return nx % 2 == 0 && ny % 2 == 0 && nz % 2 == 0; }
  Grid3 half() const noexcept { return {nx / 2, ny / 2, nz / 2}; }
  std::array<std::size_t, 3> extents() const noexcept { return {nx, ny, nz}; }
  std::string str() const {
    return std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz);
  }

  friend bool operator==(const Grid3&, const Grid3&) = default;
};

}  // namespace tis
