#include "tis/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "tis/error.hpp"

namespace tis {

namespace {

struct ConvSpec {
  const char* name;
  int in;
  int out;
};

std::vector<ConvSpec> conv_layers(const EncoderConfig& cfg) {
  return {{"encoder.conv1", 1, cfg.full_channels},
          {"encoder.conv2", cfg.full_channels, cfg.full_channels},
          {"encoder.down", cfg.full_channels, cfg.feature_width},
          {"encoder.conv3", cfg.feature_width, cfg.feature_width},
          {"encoder.conv4", cfg.feature_width, cfg.feature_width}};
}

Var conv_block(Var x, const Grid3& grid, int stride, ParamBinder& p, const std::string& name) {
  Var cols = ad::im2col3d(x, grid, stride);
  return ad::relu(ad::linear(cols, p(name + ".w"), p(name + ".b")));
}

void check_grid(const Grid3& g) {
  if (!g.all_even()) throw ShapeError("encoder needs even extents, got " + g.str());
  if (g.nx < 8 || g.ny < 8 || g.nz < 8)
    throw ShapeError("encoder needs extents >= 8 per axis, got " + g.str());
}

}  // namespace

ParamStore init_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2 || cfg.full_channels < 1 || cfg.feature_width < 1)
    throw ConfigError("encoder: classes >= 2 and positive widths required");
  Rng rng(seed);
  ParamStore store;
  auto uniform = [&](Shape shape, double bound) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.uniform(-bound, bound);
    return t;
  };
  for (const auto& l : conv_layers(cfg)) {
    const auto fan_in = static_cast<std::size_t>(27 * l.in);
    store.add(std::string(l.name) + ".w",
              uniform({fan_in, static_cast<std::size_t>(l.out)}, std::sqrt(6.0 / fan_in)));
    store.add(std::string(l.name) + ".b", Tensor({1, static_cast<std::size_t>(l.out)}));
  }
  const auto m = static_cast<std::size_t>(cfg.feature_width);
  store.add("encoder.head.w", uniform({m, static_cast<std::size_t>(cfg.classes)},
                                      std::sqrt(6.0 / static_cast<double>(m + cfg.classes))));
  store.add("encoder.head.b", Tensor({1, static_cast<std::size_t>(cfg.classes)}));
  return store;
}

EncoderConfig encoder_config_from(const ParamStore& params) {
  EncoderConfig cfg;
  cfg.full_channels = static_cast<int>(params.get("encoder.conv1.w").value.cols());
  cfg.feature_width = static_cast<int>(params.get("encoder.down.w").value.cols());
  cfg.classes = static_cast<int>(params.get("encoder.head.w").value.cols());
  return cfg;
}

std::vector<std::size_t> upsample_index(const Grid3& full) {
  const Grid3 half = full.half();
  std::vector<std::size_t> idx(full.numel());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Voxel v = full.voxel(i);
    idx[i] = half.index(Voxel{v.x / 2, v.y / 2, v.z / 2});
  }
  return idx;
}

EncoderVars encoder_forward(Var input, const Grid3& grid, ParamBinder& p) {
  check_grid(grid);
  const Grid3 half = grid.half();
  Var h = conv_block(input, grid, 1, p, "encoder.conv1");
  h = conv_block(h, grid, 1, p, "encoder.conv2");
  h = conv_block(h, grid, 2, p, "encoder.down");
  h = conv_block(h, half, 1, p, "encoder.conv3");
  Var features = conv_block(h, half, 1, p, "encoder.conv4");
  Var half_logits = ad::linear(features, p("encoder.head.w"), p("encoder.head.b"));
  const auto up = upsample_index(grid);
  return {ad::gather_rows(half_logits, up), features};
}

EncoderOutput encode(const Volume& vol, const ParamStore& params) {
  check_grid(vol.grid);
  if (vol.intensities.size() != vol.grid.numel()) throw ShapeError("volume data/extent mismatch");
  Graph g;
  ParamBinder binder(g, params);
  Var input = g.constant(Tensor({vol.grid.numel(), 1}, normalized_intensities(vol)));
  EncoderVars v = encoder_forward(input, vol.grid, binder);
  return {vol.grid, v.mask_logits.value(), v.features.value()};
}

std::vector<std::uint8_t> argmax_rows(const Tensor& logits) {
  std::vector<std::uint8_t> out(logits.rows());
  for (std::size_t r = 0; r < out.size(); ++r) {
    auto row = logits.row(r);
    // max_element returns the first maximum, i.e. the smaller class on ties.
    out[r] = static_cast<std::uint8_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

LabelMask automatic_mask(const EncoderOutput& out) {
  return {out.grid, out.classes(), argmax_rows(out.mask_logits)};
}

LabelMask automatic_mask_half(const EncoderOutput& out) {
  const Grid3 half = out.feature_grid();
  LabelMask full = automatic_mask(out);
  LabelMask m{half, full.classes, std::vector<std::uint8_t>(half.numel())};
  for (std::size_t i = 0; i < half.numel(); ++i) {
    const Voxel v = half.voxel(i);
    m.labels[i] = full.labels[out.grid.index(Voxel{2 * v.x, 2 * v.y, 2 * v.z})];
  }
  return m;
}

Roi roi_for(const LabelMask& automatic, const ClickSet& clicks, int margin) {
  if (margin < 0) throw ContractError("crop margin must be >= 0");
  const Grid3& g = automatic.grid;
  bool any = false;
  Voxel lo{}, hi{};
  auto include = [&](const Voxel& v) {
    if (!any) {
      lo = hi = v;
      any = true;
      return;
    }
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  };
  for (std::size_t i = 0; i < automatic.labels.size(); ++i)
    if (automatic.labels[i] != 0) include(g.voxel(i));
  for (const auto& c : clicks) {
    if (!g.contains(c.position)) throw PositionError("click outside the volume");
    include(c.position);
  }
  if (!any) return Roi::full(g);
  const Roi bounds = Roi::full(g);
  auto floor_even = [](std::int64_t v) { return v - (v % 2); };
  auto ceil_even = [](std::int64_t v) { return v + (v % 2); };
  Roi r;
  r.lo = {floor_even(std::max<std::int64_t>(0, lo.x - margin)),
          floor_even(std::max<std::int64_t>(0, lo.y - margin)),
          floor_even(std::max<std::int64_t>(0, lo.z - margin))};
  // hi is inclusive here; +1 makes it exclusive before rounding up.
  r.hi = {std::min(bounds.hi.x, ceil_even(hi.x + margin + 1)),
          std::min(bounds.hi.y, ceil_even(hi.y + margin + 1)),
          std::min(bounds.hi.z, ceil_even(hi.z + margin + 1))};
  return r;
}

EncoderOutput crop_output(const EncoderOutput& out, const Roi& roi) {
  const Grid3 sub = roi.extents();
  if (roi.lo.x % 2 || roi.lo.y % 2 || roi.lo.z % 2 || !sub.all_even())
    throw ShapeError("crop must be even-aligned");
  if (!out.grid.contains(roi.lo) || !out.grid.contains(Voxel{roi.hi.x - 1, roi.hi.y - 1, roi.hi.z - 1}))
    throw ShapeError("crop outside the volume");
  const std::size_t C = out.mask_logits.cols();
  const std::size_t m = out.features.cols();
  EncoderOutput res{sub, Tensor({sub.numel(), C}), Tensor({sub.half().numel(), m})};
  for (std::size_t i = 0; i < sub.numel(); ++i) {
    const Voxel v = sub.voxel(i);
    const auto src = out.grid.index(Voxel{v.x + roi.lo.x, v.y + roi.lo.y, v.z + roi.lo.z});
    std::copy_n(out.mask_logits.row(src).begin(), C, res.mask_logits.row(i).begin());
  }
  const Grid3 fh = out.feature_grid();
  const Grid3 sh = sub.half();
  for (std::size_t i = 0; i < sh.numel(); ++i) {
    const Voxel v = sh.voxel(i);
    const auto src = fh.index(Voxel{v.x + roi.lo.x / 2, v.y + roi.lo.y / 2, v.z + roi.lo.z / 2});
    std::copy_n(out.features.row(src).begin(), m, res.features.row(i).begin());
  }
  return res;
}

std::pair<Roi, EncoderOutput> crop_roi(const EncoderOutput& out, const LabelMask& automatic,
                                       const ClickSet& clicks, int margin) {
  Roi roi = roi_for(automatic, clicks, margin);
  return {roi, crop_output(out, roi)};
}

}  // namespace tis
