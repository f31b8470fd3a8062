#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tis/autodiff.hpp"
#include "tis/clicks.hpp"
#include "tis/encoder.hpp"

namespace tis {

struct RefinerConfig {
  int classes = 3;
  int width = 16;       // m, must match the encoder feature width
  int layers = 6;       // interleaved click-encoding / label-assignment pairs
  int heads = 2;        // heads of the click-encoding attentions
  int ffn_hidden = 32;  // click-encoding feed-forward width
  int ce_hidden = 16;   // hidden width of the label-embedding MLP
  Grid3 crop{16, 16, 16};  // full-resolution window the positional table covers
  int crop_margin = 4;     // dilation of the foreground/click box before fitting
  // Between layers: tokens <- LayerNorm(tokens + label_assign(tokens)) instead
  // of tokens <- label_assign(tokens).
  bool token_residual = true;

  Grid3 token_grid() const { return crop.half(); }
  void validate() const;
};

/// Component switches. Both on is the full model.
struct Ablation {
  bool click_encoding = true;  // off: indexed click features pass through unchanged
  bool label_copy = true;      // off: values are an MLP of click embeddings and the
                               // head classifies by similarity to the clicks
  static Ablation parse(const std::string& name);  // none | no-click-encoding | no-label-copy
  std::string name() const;
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

/// Parameters under the "refiner." prefix. Parameters of a disabled component
/// are not created, so the ablation can be recovered from a checkpoint.
ParamStore init_refiner(const RefinerConfig& cfg, std::uint64_t seed, Ablation ablation = {});
Ablation ablation_from(const ParamStore& params);
/// Throws ShapeError when `params` were not produced for `cfg`.
void check_refiner_params(const RefinerConfig& cfg, const ParamStore& params);

/// tokens[i] = features[i] + pe[i]. Throws ShapeError if the row counts differ.
Var tokenize(Var features, Var pe);

/// Row j is the feature vector at cell floor(p_j / 2). ContractError for an
/// empty click set, PositionError for a click outside the full-res grid.
Var index_clicks(Var features, const Grid3& feature_grid, const ClickSet& clicks);

struct ClickEncodeTrace {
  Var out;                     // [k x m]
  Var cross;                   // multi-head cross-attention readout before the residual
  std::vector<Var> cross_attn;  // per head, [k x N]
  std::vector<Var> self_attn;   // per head, [k x k]
};

/// Transformer-decoder block on the click embeddings: cross-attention to the
/// tokens, self-attention over clicks, feed-forward; each with residual and
/// layer norm (post-norm). With the click-encoding ablation the input is
/// returned unchanged and no attention is recorded.
ClickEncodeTrace click_encode(Var clicks, Var tokens, ParamBinder& p, int layer,
                              const RefinerConfig& cfg, const Ablation& ablation = {});

struct LabelAssignTrace {
  Var out;    // [N x m]
  Var attn;   // [N x k]
  Var alpha;  // [1 x 1]
};

/// out[i] = a * sum_j attn[i,j] * E[c_j] + (1 - a) * E[auto[i]] where E is the
/// label-embedding MLP applied to one-hot categories and
/// attn = softmax((tokens Wq)(clicks Wk)^T / sqrt(m)). `alpha_override` pins a
/// (tests only).
LabelAssignTrace label_assign(Var tokens, Var clicks, std::span<const int> click_labels,
                              std::span<const std::uint8_t> auto_half, ParamBinder& p, int layer,
                              const RefinerConfig& cfg, const Ablation& ablation = {},
                              std::optional<double> alpha_override = std::nullopt);

/// E = phi_CE(I_C): row c is the embedding of category c.
Var label_embeddings(ParamBinder& p, int layer, const RefinerConfig& cfg);

struct RefineTrace {
  Var logits;       // full resolution [crop.numel() x C]
  Var half_logits;  // token grid [N x C]
  std::vector<ClickEncodeTrace> click_layers;
  std::vector<LabelAssignTrace> label_layers;
};

/// Refinement on an encoder output whose grid equals cfg.crop. Layer l runs
/// click_encode then label_assign; the label-assignment output becomes the
/// next tokens (through a residual and layer norm with cfg.token_residual). Clicks are in
/// that grid's coordinates and must be nonempty.
RefineTrace refine_forward(const EncoderOutput& enc, const ClickSet& clicks, ParamBinder& p,
                           const RefinerConfig& cfg, const Ablation& ablation = {});

/// Window of exactly cfg.crop extents, even-aligned and inside `grid`, centred
/// on `roi`.
Roi fit_crop(const Roi& roi, const Grid3& crop, const Grid3& grid);

struct Refinement {
  Tensor logits;  // full volume [numel x C]
  LabelMask mask;
  Roi window;              // region the refiner rewrote
  std::size_t used_clicks;  // clicks inside the window
};

/// End-to-end inference: crop around the automatic foreground and the clicks,
/// refine inside the window, keep the automatic logits elsewhere. With no
/// clicks (or none inside the window) the automatic result is returned as is.
Refinement refine(const EncoderOutput& enc, const ClickSet& clicks, const ParamStore& params,
                  const RefinerConfig& cfg);

}  // namespace tis
