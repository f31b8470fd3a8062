#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "tis/grid.hpp"

namespace tis {

/// 3-D scalar image. Voxel order follows Grid3 (x fastest).
struct Volume {
  Grid3 grid;
  std::vector<float> intensities;

  friend bool operator==(const Volume&, const Volume&) = default;
};

/// Per-voxel category map with `classes` categories; class 0 is background.
struct LabelMask {
  Grid3 grid;
  int classes = 0;
  std::vector<std::uint8_t> labels;

  int at(const Voxel& v) const { return labels[grid.index(v)]; }
  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

/// Zero mean, unit variance copy (a constant volume maps to all zeros).
std::vector<double> normalized_intensities(const Volume& vol);

/// Nearest-neighbour x2 upsampling of a half-resolution mask.
LabelMask upsample2(const LabelMask& half, const Grid3& full);

// TISVOL1: magic, u32 nx, ny, nz, u8 dtype (0 = f32), f32 values.
void write_volume(std::ostream& os, const Volume& vol);
Volume read_volume(std::istream& is);
void save_volume(const std::filesystem::path& path, const Volume& vol);
Volume load_volume(const std::filesystem::path& path);

// TISLBL1: magic, u32 nx, ny, nz, u32 classes, u8 labels.
void write_labels(std::ostream& os, const LabelMask& mask);
LabelMask read_labels(std::istream& is);
void save_labels(const std::filesystem::path& path, const LabelMask& mask);
LabelMask load_labels(const std::filesystem::path& path);

}  // namespace tis
