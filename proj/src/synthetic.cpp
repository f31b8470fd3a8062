#include "tis/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "tis/error.hpp"
#include "tis/tensor.hpp"

namespace tis {

namespace {

struct Point {
  double x, y, z;
};

struct Shape3 {
  bool sphere = true;
  Point center{};
  Point half{};  // radius in every component for spheres

  bool contains(const Point& p) const {
    const double dx = p.x - center.x, dy = p.y - center.y, dz = p.z - center.z;
    if (sphere) return dx * dx + dy * dy + dz * dz <= half.x * half.x;
    return std::abs(dx) <= half.x && std::abs(dy) <= half.y && std::abs(dz) <= half.z;
  }
  double volume() const {
    if (sphere) return 4.0 / 3.0 * std::numbers::pi * half.x * half.x * half.x;
    return 8.0 * half.x * half.y * half.z;
  }
};

double min_extent(const Grid3& g) {
  return static_cast<double>(std::min({g.nx, g.ny, g.nz}));
}

Point random_center(Rng& rng, const Grid3& g, const Point& half) {
  // Voxel centres sit at integer coordinates; keep one voxel of clearance.
  auto axis = [&](std::size_t extent, double h) {
    return rng.uniform(h + 1.0, static_cast<double>(extent) - h - 2.0);
  };
  return {axis(g.nx, half.x), axis(g.ny, half.y), axis(g.nz, half.z)};
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 2) throw SpecError("synthetic: at least two classes are required");
  if (!grid.all_even() || grid.nx < 8 || grid.ny < 8 || grid.nz < 8)
    throw SpecError("synthetic: extents must be even and >= 8");
  const double limit = min_extent(grid) / 2.0 - 1.5;
  auto check_range = [&](double lo, double hi, const char* what) {
    if (!(lo > 0.0) || hi < lo) throw SpecError(std::string("synthetic: bad ") + what + " radius range");
    if (hi > limit)
      throw SpecError(std::string("synthetic: ") + what + " radius " + std::to_string(hi) +
                      " does not fit in " + grid.str());
  };
  check_range(organ_radius_min, organ_radius_max, "organ");
  if (classes >= 3) {
    check_range(tumor_radius_min, tumor_radius_max, "tumor");
    if (tumor_radius_max + 1.0 > organ_radius_min)
      throw SpecError("synthetic: tumor must fit inside the smallest organ");
  }
  if (classes >= 4) check_range(extra_radius_min, extra_radius_max, "extra structure");
  if (!(noise >= 0.0)) throw SpecError("synthetic: noise must be >= 0");
}

std::vector<Case> generate(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed,
                           std::vector<NominalVolumes>* nominal) {
  spec.validate();
  if (n == 0) throw SpecError("synthetic: need at least one sample");
  const Rng root(seed);
  const Grid3 g = spec.grid;
  const Grid3 blocks = g.half();
  std::vector<Case> out;
  if (nominal) nominal->clear();

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.fork(i);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100) throw SpecError("synthetic: could not place every class");
      std::vector<Shape3> extras;
      for (int c = 3; c < spec.classes; ++c) {
        const double r = rng.uniform(spec.extra_radius_min, spec.extra_radius_max);
        extras.push_back({true, random_center(rng, g, {r, r, r}), {r, r, r}});
      }
      Shape3 organ;
      organ.sphere = rng.uniform() < 0.5;
      if (organ.sphere) {
        const double r = rng.uniform(spec.organ_radius_min, spec.organ_radius_max);
        organ.half = {r, r, r};
      } else {
        organ.half = {rng.uniform(spec.organ_radius_min, spec.organ_radius_max),
                      rng.uniform(spec.organ_radius_min, spec.organ_radius_max),
                      rng.uniform(spec.organ_radius_min, spec.organ_radius_max)};
      }
      organ.center = random_center(rng, g, organ.half);
      Shape3 tumor;
      if (spec.classes >= 3) {
        const double r = rng.uniform(spec.tumor_radius_min, spec.tumor_radius_max);
        tumor.half = {r, r, r};
        if (organ.sphere) {
          // Uniform direction by rejection, then a radius leaving 1 voxel of wall.
          const double room = organ.half.x - r - 1.0;
          Point d;
          do {
            d = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
          } while (d.x * d.x + d.y * d.y + d.z * d.z > 1.0);
          tumor.center = {organ.center.x + room * d.x, organ.center.y + room * d.y,
                          organ.center.z + room * d.z};
        } else {
          auto axis = [&](double c, double h) {
            const double room = h - r - 1.0;
            return c + rng.uniform(-room, room);
          };
          tumor.center = {axis(organ.center.x, organ.half.x), axis(organ.center.y, organ.half.y),
                          axis(organ.center.z, organ.half.z)};
        }
      }

      LabelMask mask{g, spec.classes, std::vector<std::uint8_t>(g.numel(), 0)};
      for (std::size_t b = 0; b < blocks.numel(); ++b) {
        const Voxel bv = blocks.voxel(b);
        const Point p{2.0 * static_cast<double>(bv.x) + 0.5, 2.0 * static_cast<double>(bv.y) + 0.5,
                      2.0 * static_cast<double>(bv.z) + 0.5};
        std::uint8_t label = 0;
        for (std::size_t e = 0; e < extras.size(); ++e)
          if (extras[e].contains(p)) label = static_cast<std::uint8_t>(3 + e);
        if (organ.contains(p)) label = 1;
        if (spec.classes >= 3 && tumor.contains(p)) label = 2;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              mask.labels[g.index(Voxel{2 * bv.x + dx, 2 * bv.y + dy, 2 * bv.z + dz})] = label;
      }
      std::vector<std::size_t> counts(static_cast<std::size_t>(spec.classes), 0);
      for (auto l : mask.labels) ++counts[l];
      if (std::find(counts.begin(), counts.end(), 0u) != counts.end()) continue;

      const double means[] = {0.0, spec.organ_intensity, spec.tumor_intensity};
      Volume vol{g, std::vector<float>(g.numel())};
      std::vector<double> raw(g.numel());
      for (std::size_t v = 0; v < g.numel(); ++v) {
        const int l = mask.labels[v];
        const double mu = l < 3 ? means[l] : spec.extra_intensity;
        raw[v] = mu + spec.noise * rng.normal();
      }
      for (std::size_t v = 0; v < g.numel(); ++v) vol.intensities[v] = static_cast<float>(raw[v]);
      const auto normed = normalized_intensities(vol);
      for (std::size_t v = 0; v < g.numel(); ++v) vol.intensities[v] = static_cast<float>(normed[v]);

      if (nominal) {
        NominalVolumes nv;
        nv.per_class.assign(static_cast<std::size_t>(spec.classes), 0.0);
        const double tumor_v = spec.classes >= 3 ? tumor.volume() : 0.0;
        nv.per_class[1] = organ.volume() - tumor_v;
        if (spec.classes >= 3) nv.per_class[2] = tumor_v;
        for (std::size_t e = 0; e < extras.size(); ++e) nv.per_class[3 + e] = extras[e].volume();
        nv.per_class[0] = static_cast<double>(g.numel());
        for (std::size_t c = 1; c < nv.per_class.size(); ++c) nv.per_class[0] -= nv.per_class[c];
        nominal->push_back(std::move(nv));
      }
      out.push_back({std::move(vol), std::move(mask)});
      break;
    }
  }
  return out;
}

void save_cases(const std::filesystem::path& dir, const std::vector<Case>& cases) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "case_%03zu", i);
    save_volume(dir / (std::string(stem) + ".vol"), cases[i].volume);
    save_labels(dir / (std::string(stem) + ".lbl"), cases[i].labels);
  }
}

std::vector<Case> load_cases(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("missing dataset directory " + dir.string());
  std::vector<std::filesystem::path> vols;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".vol") vols.push_back(e.path());
  std::sort(vols.begin(), vols.end());
  if (vols.empty()) throw IoError("no .vol files in " + dir.string());
  std::vector<Case> cases;
  for (const auto& v : vols) {
    auto lbl = v;
    lbl.replace_extension(".lbl");
    Case c{load_volume(v), load_labels(lbl)};
    if (c.volume.grid != c.labels.grid) throw FormatError("extents differ between " + v.string() + " and its labels");
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace tis
