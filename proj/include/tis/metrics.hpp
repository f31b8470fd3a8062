#pragma once

#include <cstdint>
#include <span>

namespace tis {

/// 2|P ∩ G| / (|P| + |G|) over boolean voxel indicators; 1.0 when both are empty.
double dsc(std::span<const std::uint8_t> pred_region, std::span<const std::uint8_t> gt_region);

/// Dice of the voxel sets labelled `cls` in two label arrays.
double dsc_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int cls);

}  // namespace tis
