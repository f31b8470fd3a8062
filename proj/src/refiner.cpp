#include "tis/refiner.hpp"

#include <algorithm>
#include <cmath>

#include "tis/error.hpp"

namespace tis {

namespace {

std::string layer_key(int layer, const char* suffix) {
  return "refiner.l" + std::to_string(layer) + "." + suffix;
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

/// Multi-head scaled dot-product attention. q is [a x m], k and v are [b x m];
/// each head uses a contiguous column block of width m / heads.
Var multi_head(Var q, Var k, Var v, int heads, std::vector<Var>* weights) {
  const std::size_t m = q.value().cols();
  const std::size_t d = m / sz(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  if (heads == 1) {
    Var a = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), scale));
    if (weights) weights->push_back(a);
    return ad::matmul(a, v);
  }
  std::vector<Var> parts;
  for (int h = 0; h < heads; ++h) {
    const std::size_t b = sz(h) * d;
    Var a = ad::softmax_rows(
        ad::scale(ad::matmul_nt(ad::slice_cols(q, b, d), ad::slice_cols(k, b, d)), scale));
    if (weights) weights->push_back(a);
    parts.push_back(ad::matmul(a, ad::slice_cols(v, b, d)));
  }
  return ad::concat_cols(parts);
}

Var mlp(Var x, ParamBinder& p, const std::string& prefix) {
  Var h = ad::gelu(ad::linear(x, p(prefix + "1.w"), p(prefix + "1.b")));
  return ad::linear(h, p(prefix + "2.w"), p(prefix + "2.b"));
}

Var layer_norm(Var x, ParamBinder& p, const std::string& prefix) {
  return ad::layer_norm_rows(x, p(prefix + ".g"), p(prefix + ".b"));
}

}  // namespace

void RefinerConfig::validate() const {
  if (classes < 2) throw ConfigError("refiner: classes must be >= 2");
  if (width < 1 || layers < 1 || heads < 1 || ffn_hidden < 1 || ce_hidden < 1)
    throw ConfigError("refiner: widths, layers and heads must be positive");
  if (width % heads != 0) throw ConfigError("refiner: width must be divisible by heads");
  if (!crop.all_even() || crop.numel() == 0) throw ConfigError("refiner: crop extents must be even");
  if (crop_margin < 0) throw ConfigError("refiner: crop margin must be >= 0");
}

Ablation Ablation::parse(const std::string& name) {
  if (name == "none") return {};
  if (name == "no-click-encoding") return {false, true};
  if (name == "no-label-copy") return {true, false};
  throw ConfigError("unknown ablation '" + name + "'");
}

std::string Ablation::name() const {
  if (click_encoding && label_copy) return "none";
  if (!click_encoding && label_copy) return "no-click-encoding";
  if (click_encoding && !label_copy) return "no-label-copy";
  return "no-click-encoding+no-label-copy";
}

ParamStore init_refiner(const RefinerConfig& cfg, std::uint64_t seed, Ablation ablation) {
  cfg.validate();
  Rng rng(seed);
  ParamStore s;
  const std::size_t m = sz(cfg.width), C = sz(cfg.classes);
  auto xavier = [&](std::size_t in, std::size_t out) {
    Tensor t({in, out});
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : t.storage()) v = rng.uniform(-bound, bound);
    return t;
  };
  auto ones = [](std::size_t n) { return Tensor({1, n}, 1.0); };
  auto zeros = [](std::size_t n) { return Tensor({1, n}); };
  auto add_mlp = [&](const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out) {
    s.add(prefix + "1.w", xavier(in, hidden));
    s.add(prefix + "1.b", zeros(hidden));
    s.add(prefix + "2.w", xavier(hidden, out));
    s.add(prefix + "2.b", zeros(out));
  };

  const Grid3 tg = cfg.token_grid();
  Tensor pe({tg.nz, tg.ny, tg.nx, m});
  for (double& v : pe.storage()) v = rng.uniform(-0.02, 0.02);
  s.add("refiner.pe", std::move(pe));

  for (int l = 0; l < cfg.layers; ++l) {
    if (ablation.click_encoding) {
      for (const char* w : {"ce.wq", "ce.wk", "ce.wv", "ce.sq", "ce.sk", "ce.sv"})
        s.add(layer_key(l, w), xavier(m, m));
      for (const char* ln : {"ce.ln1", "ce.ln2", "ce.ln3"}) {
        s.add(layer_key(l, ln) + ".g", ones(m));
        s.add(layer_key(l, ln) + ".b", zeros(m));
      }
      add_mlp(layer_key(l, "ce.ffn"), m, sz(cfg.ffn_hidden), m);
    }
    s.add(layer_key(l, "la.wq"), xavier(m, m));
    s.add(layer_key(l, "la.wk"), xavier(m, m));
    add_mlp(layer_key(l, "la.emb"), C, sz(cfg.ce_hidden), m);
    s.add(layer_key(l, "la.alpha"), Tensor({1, 1}));
    if (cfg.token_residual) {
      s.add(layer_key(l, "la.ln.g"), ones(m));
      s.add(layer_key(l, "la.ln.b"), zeros(m));
    }
    if (!ablation.label_copy) add_mlp(layer_key(l, "la.val"), m, m, m);
  }

  if (ablation.label_copy) {
    s.add("refiner.head.w", xavier(m, C));
    s.add("refiner.head.b", zeros(C));
  } else {
    s.add("refiner.cls.w", xavier(m, m));
    s.add("refiner.cls.alpha", Tensor({1, 1}));
    Tensor table({C, C});
    for (std::size_t c = 0; c < C; ++c) table.at(c, c) = 4.0;
    s.add("refiner.cls.auto", std::move(table));
  }
  return s;
}

Ablation ablation_from(const ParamStore& params) {
  Ablation a;
  a.click_encoding = params.contains("refiner.l0.ce.wq");
  a.label_copy = params.contains("refiner.head.w");
  return a;
}

void check_refiner_params(const RefinerConfig& cfg, const ParamStore& params) {
  const ParamStore ref = init_refiner(cfg, 0, ablation_from(params));
  for (const auto& [name, p] : params)
    if (!ref.contains(name)) throw ShapeError("checkpoint parameter " + name + " not used by this config");
  for (const auto& [name, p] : ref) {
    if (!params.contains(name)) throw ShapeError("checkpoint lacks refiner parameter " + name);
    if (params.get(name).value.shape() != p.value.shape())
      throw ShapeError("refiner parameter " + name + " has shape " +
                       shape_string(params.get(name).value.shape()) + ", config expects " +
                       shape_string(p.value.shape()));
  }
}

Var tokenize(Var features, Var pe) {
  const Tensor& f = features.value();
  const Tensor& t = pe.value();
  const std::size_t m = f.cols();
  if (t.numel() != f.numel() || t.shape().back() != m)
    throw ShapeError("tokenize: positional table " + shape_string(t.shape()) +
                     " does not match features " + shape_string(f.shape()));
  return ad::add(features, ad::reshape(pe, {f.rows(), m}));
}

Var index_clicks(Var features, const Grid3& feature_grid, const ClickSet& clicks) {
  if (clicks.empty()) throw ContractError("index_clicks: at least one click is required");
  const Grid3 full{feature_grid.nx * 2, feature_grid.ny * 2, feature_grid.nz * 2};
  std::vector<std::size_t> rows;
  rows.reserve(clicks.size());
  for (const auto& c : clicks) {
    if (!full.contains(c.position))
      throw PositionError("click (" + std::to_string(c.position.x) + "," +
                          std::to_string(c.position.y) + "," + std::to_string(c.position.z) +
                          ") outside " + full.str());
    rows.push_back(
        feature_grid.index(Voxel{c.position.x / 2, c.position.y / 2, c.position.z / 2}));
  }
  return ad::gather_rows(features, rows);
}

ClickEncodeTrace click_encode(Var clicks, Var tokens, ParamBinder& p, int layer,
                              const RefinerConfig& cfg, const Ablation& ablation) {
  ClickEncodeTrace tr;
  if (!ablation.click_encoding) {
    tr.out = clicks;
    return tr;
  }
  auto key = [&](const char* s) { return layer_key(layer, s); };
  Var q = ad::matmul(clicks, p(key("ce.wq")));
  Var k = ad::matmul(tokens, p(key("ce.wk")));
  Var v = ad::matmul(tokens, p(key("ce.wv")));
  tr.cross = multi_head(q, k, v, cfg.heads, &tr.cross_attn);
  Var x = layer_norm(ad::add(clicks, tr.cross), p, key("ce.ln1"));

  Var sq = ad::matmul(x, p(key("ce.sq")));
  Var sk = ad::matmul(x, p(key("ce.sk")));
  Var sv = ad::matmul(x, p(key("ce.sv")));
  x = layer_norm(ad::add(x, multi_head(sq, sk, sv, cfg.heads, &tr.self_attn)), p, key("ce.ln2"));

  x = layer_norm(ad::add(x, mlp(x, p, key("ce.ffn"))), p, key("ce.ln3"));
  tr.out = x;
  return tr;
}

Var label_embeddings(ParamBinder& p, int layer, const RefinerConfig& cfg) {
  const std::size_t C = sz(cfg.classes);
  Tensor eye({C, C});
  for (std::size_t c = 0; c < C; ++c) eye.at(c, c) = 1.0;
  return mlp(p.graph().constant(std::move(eye)), p, layer_key(layer, "la.emb"));
}

LabelAssignTrace label_assign(Var tokens, Var clicks, std::span<const int> click_labels,
                              std::span<const std::uint8_t> auto_half, ParamBinder& p, int layer,
                              const RefinerConfig& cfg, const Ablation& ablation,
                              std::optional<double> alpha_override) {
  const std::size_t n = tokens.value().rows();
  const std::size_t k = clicks.value().rows();
  if (click_labels.size() != k)
    throw ShapeError("label_assign: " + std::to_string(click_labels.size()) + " labels for " +
                     std::to_string(k) + " clicks");
  if (auto_half.size() != n)
    throw ShapeError("label_assign: automatic mask has " + std::to_string(auto_half.size()) +
                     " cells for " + std::to_string(n) + " tokens");
  Graph& g = p.graph();
  auto key = [&](const char* s) { return layer_key(layer, s); };
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.width));

  LabelAssignTrace tr;
  Var q = ad::matmul(tokens, p(key("la.wq")));
  Var kk = ad::matmul(clicks, p(key("la.wk")));
  tr.attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, kk), scale));

  Var table = label_embeddings(p, layer, cfg);
  Var values;
  if (ablation.label_copy) {
    std::vector<std::size_t> idx;
    for (int c : click_labels) {
      if (c < 0 || c >= cfg.classes) throw IndexError("label_assign: click category out of range");
      idx.push_back(sz(c));
    }
    values = ad::gather_rows(table, idx);
  } else {
    values = mlp(clicks, p, key("la.val"));
  }
  std::vector<std::size_t> auto_idx(auto_half.begin(), auto_half.end());
  for (auto a : auto_idx)
    if (a >= sz(cfg.classes)) throw IndexError("label_assign: automatic label out of range");
  Var auto_emb = ad::gather_rows(table, auto_idx);

  tr.alpha = alpha_override ? g.constant(Tensor({1, 1}, *alpha_override))
                            : ad::sigmoid(p(key("la.alpha")));
  Var copied = ad::matmul(tr.attn, values);
  tr.out = ad::add(ad::scale_by(copied, tr.alpha),
                   ad::scale_by(auto_emb, ad::affine(tr.alpha, -1.0, 1.0)));
  return tr;
}

RefineTrace refine_forward(const EncoderOutput& enc, const ClickSet& clicks, ParamBinder& p,
                           const RefinerConfig& cfg, const Ablation& ablation) {
  if (enc.grid != cfg.crop)
    throw ShapeError("refine_forward: encoder grid " + enc.grid.str() + " differs from crop " +
                     cfg.crop.str());
  if (enc.feature_width() != cfg.width || enc.classes() != cfg.classes)
    throw ShapeError("refine_forward: encoder output width/classes do not match the refiner");
  if (clicks.empty()) throw ContractError("refine_forward: needs at least one click");
  Graph& g = p.graph();
  const Grid3 fg = enc.feature_grid();

  Var features = g.constant(enc.features);
  Var tokens = tokenize(features, p("refiner.pe"));
  Var vclick = index_clicks(features, fg, clicks);

  std::vector<int> labels;
  for (const auto& c : clicks) {
    if (c.category < 0 || c.category >= cfg.classes)
      throw IndexError("refine_forward: click category out of range");
    labels.push_back(c.category);
  }
  const LabelMask auto_half = automatic_mask_half(enc);

  RefineTrace tr;
  for (int l = 0; l < cfg.layers; ++l) {
    tr.click_layers.push_back(click_encode(vclick, tokens, p, l, cfg, ablation));
    vclick = tr.click_layers.back().out;
    tr.label_layers.push_back(
        label_assign(tokens, vclick, labels, auto_half.labels, p, l, cfg, ablation));
    tokens = cfg.token_residual
                 ? layer_norm(ad::add(tokens, tr.label_layers.back().out), p, layer_key(l, "la.ln"))
                 : tr.label_layers.back().out;
  }

  if (ablation.label_copy) {
    tr.half_logits = ad::linear(tokens, p("refiner.head.w"), p("refiner.head.b"));
  } else {
    // Click embeddings act as per-class classifiers: the score of class c is
    // the mean similarity to clicks of category c (0 when none).
    const std::size_t k = clicks.size(), C = sz(cfg.classes);
    Tensor group({k, C});
    std::vector<double> counts(C, 0.0);
    for (int c : labels) counts[sz(c)] += 1.0;
    for (std::size_t j = 0; j < k; ++j) group.at(j, sz(labels[j])) = 1.0 / counts[sz(labels[j])];
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.width));
    Var sim = ad::scale(ad::matmul_nt(ad::matmul(tokens, p("refiner.cls.w")), vclick), scale);
    Var click_logits = ad::matmul(sim, g.constant(std::move(group)));
    std::vector<std::size_t> auto_idx(auto_half.labels.begin(), auto_half.labels.end());
    Var auto_logits = ad::gather_rows(p("refiner.cls.auto"), auto_idx);
    Var a = ad::sigmoid(p("refiner.cls.alpha"));
    tr.half_logits = ad::add(ad::scale_by(click_logits, a),
                             ad::scale_by(auto_logits, ad::affine(a, -1.0, 1.0)));
  }
  const auto up = upsample_index(enc.grid);
  tr.logits = ad::gather_rows(tr.half_logits, up);
  return tr;
}

Roi fit_crop(const Roi& roi, const Grid3& crop, const Grid3& grid) {
  if (crop.nx > grid.nx || crop.ny > grid.ny || crop.nz > grid.nz)
    throw ShapeError("crop " + crop.str() + " larger than volume " + grid.str());
  auto axis = [](std::int64_t lo, std::int64_t hi, std::size_t want, std::size_t extent) {
    const auto w = static_cast<std::int64_t>(want);
    std::int64_t start = (lo + hi) / 2 - w / 2;
    start -= ((start % 2) + 2) % 2;
    return std::clamp<std::int64_t>(start, 0, static_cast<std::int64_t>(extent) - w);
  };
  Roi r;
  r.lo = {axis(roi.lo.x, roi.hi.x, crop.nx, grid.nx), axis(roi.lo.y, roi.hi.y, crop.ny, grid.ny),
          axis(roi.lo.z, roi.hi.z, crop.nz, grid.nz)};
  r.hi = {r.lo.x + static_cast<std::int64_t>(crop.nx), r.lo.y + static_cast<std::int64_t>(crop.ny),
          r.lo.z + static_cast<std::int64_t>(crop.nz)};
  return r;
}

Refinement refine(const EncoderOutput& enc, const ClickSet& clicks, const ParamStore& params,
                  const RefinerConfig& cfg) {
  const LabelMask automatic = automatic_mask(enc);
  for (const auto& c : clicks) {
    if (!enc.grid.contains(c.position)) throw PositionError("click outside the volume");
    if (c.category < 0 || c.category >= cfg.classes)
      throw ValidationError("click category out of range");
  }
  Refinement res{enc.mask_logits, automatic, Roi::full(enc.grid), 0};
  if (clicks.empty()) return res;

  const Roi box = roi_for(automatic, clicks, cfg.crop_margin);
  const Roi window = fit_crop(box, cfg.crop, enc.grid);
  ClickSet local;
  for (const auto& c : clicks)
    if (window.contains(c.position))
      local.push_back({{c.position.x - window.lo.x, c.position.y - window.lo.y,
                        c.position.z - window.lo.z},
                       c.category});
  res.window = window;
  res.used_clicks = local.size();
  if (local.empty()) return res;

  const EncoderOutput sub = crop_output(enc, window);
  Graph g;
  ParamBinder binder(g, params);
  const RefineTrace tr = refine_forward(sub, local, binder, cfg, ablation_from(params));
  const Tensor& crop_logits = tr.logits.value();
  const std::size_t C = crop_logits.cols();
  for (std::size_t i = 0; i < cfg.crop.numel(); ++i) {
    const Voxel v = cfg.crop.voxel(i);
    const auto dst = enc.grid.index(Voxel{v.x + window.lo.x, v.y + window.lo.y, v.z + window.lo.z});
    std::copy_n(crop_logits.row(i).begin(), C, res.logits.row(dst).begin());
  }
  res.mask.labels = argmax_rows(res.logits);
  return res;
}

}  // namespace tis
