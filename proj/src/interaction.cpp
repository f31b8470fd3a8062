#include "tis/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include <json.hpp>

#include "tis/error.hpp"
#include "tis/metrics.hpp"

namespace tis {

namespace {

std::vector<Voxel> neighbour_offsets(int connectivity) {
  std::vector<Voxel> offs;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan != 1) continue;
        offs.push_back({dx, dy, dz});
      }
  return offs;
}

void require_same_grid(const LabelMask& a, const LabelMask& b) {
  if (a.grid != b.grid) throw ShapeError("mask extents differ: " + a.grid.str() + " vs " + b.grid.str());
}

}  // namespace

ErrorMap error_map(const LabelMask& pred, const LabelMask& gt) {
  require_same_grid(pred, gt);
  ErrorMap e{pred.grid, std::vector<std::uint8_t>(pred.labels.size())};
  for (std::size_t i = 0; i < e.wrong.size(); ++i) e.wrong[i] = pred.labels[i] != gt.labels[i];
  return e;
}

Components components(const ErrorMap& err, int connectivity) {
  if (connectivity != 6 && connectivity != 26) throw ConfigError("connectivity must be 6 or 26");
  const Grid3& g = err.grid;
  const auto offs = neighbour_offsets(connectivity);
  Components out;
  out.ids.assign(g.numel(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < g.numel(); ++seed) {
    if (!err.wrong[seed] || out.ids[seed] != 0) continue;
    const auto id = static_cast<std::int32_t>(out.sizes.size() + 1);
    std::size_t size = 0;
    out.ids[seed] = id;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      ++size;
      const Voxel v = g.voxel(cur);
      for (const auto& o : offs) {
        const Voxel n{v.x + o.x, v.y + o.y, v.z + o.z};
        if (!g.contains(n)) continue;
        const std::size_t ni = g.index(n);
        if (err.wrong[ni] && out.ids[ni] == 0) {
          out.ids[ni] = id;
          queue.push_back(ni);
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

void SimulatorConfig::validate() const {
  if (disturbance < 0) throw ConfigError("click disturbance must be >= 0");
  if (connectivity != 6 && connectivity != 26) throw ConfigError("connectivity must be 6 or 26");
}

std::optional<Click> simulate_click(const LabelMask& pred, const LabelMask& gt,
                                    const SimulatorConfig& cfg, Rng& rng) {
  cfg.validate();
  const ErrorMap err = error_map(pred, gt);
  const Components comps = components(err, cfg.connectivity);
  if (comps.count() == 0) return std::nullopt;

  std::size_t best = 0;
  for (std::size_t c = 1; c < comps.count(); ++c)
    if (comps.sizes[c] > comps.sizes[best]) best = c;
  const auto target = static_cast<std::int32_t>(best + 1);

  const Grid3& g = pred.grid;
  double sx = 0, sy = 0, sz = 0;
  std::vector<std::size_t> members;
  members.reserve(comps.sizes[best]);
  for (std::size_t i = 0; i < g.numel(); ++i) {
    if (comps.ids[i] != target) continue;
    const Voxel v = g.voxel(i);
    sx += static_cast<double>(v.x);
    sy += static_cast<double>(v.y);
    sz += static_cast<double>(v.z);
    members.push_back(i);
  }
  const double n = static_cast<double>(members.size());
  const Voxel centroid{std::llround(sx / n), std::llround(sy / n), std::llround(sz / n)};

  const std::int64_t eps = cfg.disturbance;
  const Voxel offset{rng.uniform_int(-eps, eps), rng.uniform_int(-eps, eps),
                     rng.uniform_int(-eps, eps)};
  auto clip = [](std::int64_t v, std::size_t extent) {
    return std::clamp<std::int64_t>(v, 0, static_cast<std::int64_t>(extent) - 1);
  };
  Voxel pos{clip(centroid.x + offset.x, g.nx), clip(centroid.y + offset.y, g.ny),
            clip(centroid.z + offset.z, g.nz)};

  if (comps.ids[g.index(pos)] != target) {
    static const auto face = neighbour_offsets(6);
    std::vector<std::size_t> interior;
    for (std::size_t i : members) {
      const Voxel v = g.voxel(i);
      bool inside = true;
      for (const auto& o : face) {
        const Voxel nb{v.x + o.x, v.y + o.y, v.z + o.z};
        if (!g.contains(nb) || comps.ids[g.index(nb)] != target) {
          inside = false;
          break;
        }
      }
      if (inside) interior.push_back(i);
    }
    const auto& pool = interior.empty() ? members : interior;
    const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1);
    pos = g.voxel(pool[static_cast<std::size_t>(pick)]);
  }
  return Click{pos, gt.at(pos)};
}

std::vector<double> class_dice(const LabelMask& pred, const LabelMask& gt) {
  require_same_grid(pred, gt);
  std::vector<double> out(static_cast<std::size_t>(gt.classes));
  for (int c = 0; c < gt.classes; ++c) out[static_cast<std::size_t>(c)] = dsc_class(pred.labels, gt.labels, c);
  return out;
}

SessionTrace session_run(const EncoderOutput& enc, const LabelMask& gt, const ParamStore& refiner,
                         const RefinerConfig& rcfg, int n_clicks, const SimulatorConfig& scfg,
                         Rng& rng) {
  if (n_clicks < 1) throw ContractError("session_run: n_clicks must be >= 1");
  SessionTrace trace;
  LabelMask pred = automatic_mask(enc);
  trace.steps.push_back({{}, pred, class_dice(pred, gt)});
  ClickSet clicks;
  for (int t = 1; t <= n_clicks; ++t) {
    auto click = simulate_click(pred, gt, scfg, rng);
    if (!click) {
      trace.converged = true;
      break;
    }
    clicks.push_back(*click);
    pred = refine(enc, clicks, refiner, rcfg).mask;
    trace.steps.push_back({clicks, pred, class_dice(pred, gt)});
  }
  return trace;
}

SessionTrace session_replay(const EncoderOutput& enc, const LabelMask* gt,
                            const ParamStore& refiner, const RefinerConfig& rcfg,
                            const ClickSet& clicks) {
  SessionTrace trace;
  LabelMask pred = automatic_mask(enc);
  auto dice = [&](const LabelMask& m) { return gt ? class_dice(m, *gt) : std::vector<double>{}; };
  trace.steps.push_back({{}, pred, dice(pred)});
  ClickSet prefix;
  for (const auto& c : clicks) {
    prefix.push_back(c);
    pred = refine(enc, prefix, refiner, rcfg).mask;
    trace.steps.push_back({prefix, pred, dice(pred)});
  }
  return trace;
}

std::string trace_to_jsonl(const SessionTrace& trace) {
  std::ostringstream os;
  for (std::size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& s = trace.steps[t];
    nlohmann::json j;
    j["step"] = t;
    if (t == 0) {
      j["click"] = nullptr;
    } else {
      const Click& c = s.clicks.back();
      j["click"] = {{"position", {c.position.x, c.position.y, c.position.z}},
                    {"category", c.category}};
    }
    j["dice"] = s.dice;
    os << j.dump() << '\n';
  }
  return os.str();
}

ClickSet clicks_from_jsonl(const std::string& text) {
  ClickSet clicks;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad trace line: ") + e.what());
    }
    if (!j.contains("click") || j["click"].is_null()) continue;
    const auto& p = j["click"]["position"];
    clicks.push_back({{p.at(0).get<std::int64_t>(), p.at(1).get<std::int64_t>(),
                       p.at(2).get<std::int64_t>()},
                      j["click"]["category"].get<int>()});
  }
  return clicks;
}

}  // namespace tis
