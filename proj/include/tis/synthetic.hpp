#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tis/volume.hpp"

namespace tis {

/// Synthetic stand-in for an abdominal CT benchmark. Class 1 is an "organ"
/// (sphere or cuboid), class 2 a small low-contrast "tumor" sphere fully
/// embedded in the organ, classes 3.. extra spheres elsewhere. Labels are
/// rasterized on 2x2x2 blocks (the resolution of the feature grid); intensities
/// are per-class means plus Gaussian noise, normalized per volume.
struct SyntheticSpec {
  Grid3 grid{32, 32, 32};
  int classes = 3;
  double organ_radius_min = 7.0, organ_radius_max = 10.0;  // sphere radius or cuboid half-size
  double tumor_radius_min = 2.5, tumor_radius_max = 4.0;
  double extra_radius_min = 3.0, extra_radius_max = 5.0;
  double organ_intensity = 1.0;
  double tumor_intensity = 1.5;
  double extra_intensity = 2.0;
  double noise = 0.6;

  /// Throws SpecError when shapes cannot fit.
  void validate() const;
};

struct Case {
  Volume volume;
  LabelMask labels;
};

struct NominalVolumes {
  std::vector<double> per_class;  // analytic voxel counts of the drawn shapes
};

/// Sample i depends only on (spec, seed, i).
std::vector<Case> generate(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed,
                           std::vector<NominalVolumes>* nominal = nullptr);

/// <dir>/case_NNN.vol + case_NNN.lbl
void save_cases(const std::filesystem::path& dir, const std::vector<Case>& cases);
std::vector<Case> load_cases(const std::filesystem::path& dir);

}  // namespace tis
