#pragma once

#include <cstdint>
#include <utility>

#include "tis/autodiff.hpp"
#include "tis/clicks.hpp"
#include "tis/params.hpp"
#include "tis/volume.hpp"

namespace tis {

struct EncoderConfig {
  int classes = 3;
  int full_channels = 4;   // width of the two full-resolution conv blocks
  int feature_width = 16;  // m, width of the half-resolution features
};

/// Automatic segmentation logits and half-resolution dense features.
/// Rows of mask_logits follow `grid`; rows of features follow `grid.half()`.
struct EncoderOutput {
  Grid3 grid;
  Tensor mask_logits;  // [grid.numel() x C]
  Tensor features;     // [grid.half().numel() x m]

  Grid3 feature_grid() const { return grid.half(); }
  int classes() const { return static_cast<int>(mask_logits.cols()); }
  int feature_width() const { return static_cast<int>(features.cols()); }
};

/// Parameters under the "encoder." prefix, He-uniform weights, zero biases.
ParamStore init_encoder(const EncoderConfig& cfg, std::uint64_t seed);
/// Reads the architecture back from parameter shapes.
EncoderConfig encoder_config_from(const ParamStore& params);

/// Graph form of the encoder, shared by training and inference.
struct EncoderVars {
  Var mask_logits;  // full resolution
  Var features;     // half resolution
};
/// `input` is [grid.numel() x 1] normalized intensities.
EncoderVars encoder_forward(Var input, const Grid3& grid, ParamBinder& params);

/// Conv stack: two 3x3x3 conv+ReLU blocks at full resolution, a stride-2
/// conv+ReLU, two conv+ReLU blocks at half resolution (the features), then a
/// 1x1x1 head on the features upsampled to full resolution by duplication.
/// Throws ShapeError for odd extents or extents below 8.
EncoderOutput encode(const Volume& vol, const ParamStore& params);

/// Per-voxel argmax over classes; ties go to the smaller class index.
LabelMask automatic_mask(const EncoderOutput& out);
/// Argmax over the logits of rows [0..n) of any [n x C] tensor.
std::vector<std::uint8_t> argmax_rows(const Tensor& logits);
/// Automatic mask sampled on the half-resolution feature grid.
LabelMask automatic_mask_half(const EncoderOutput& out);

/// Bounding box of predicted foreground and click positions, dilated by
/// `margin`, clipped to the volume and rounded outward to even corners. Empty
/// foreground and no clicks gives the full volume.
Roi roi_for(const LabelMask& automatic, const ClickSet& clicks, int margin);
/// Restricts an encoder output to an even-aligned Roi.
EncoderOutput crop_output(const EncoderOutput& out, const Roi& roi);
std::pair<Roi, EncoderOutput> crop_roi(const EncoderOutput& out, const LabelMask& automatic,
                                       const ClickSet& clicks, int margin);

/// Index of full-resolution voxel i's parent cell in the half grid.
std::vector<std::size_t> upsample_index(const Grid3& full);

}  // namespace tis
