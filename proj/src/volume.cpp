#include "tis/volume.hpp"

#include <cmath>
#include <fstream>

#include "tis/binary_io.hpp"
#include "tis/error.hpp"

namespace tis {

namespace {
constexpr std::string_view kVolumeMagic = "TISVOL1";
constexpr std::string_view kLabelMagic = "TISLBL1";
constexpr std::uint32_t kMaxExtent = 4096;

Grid3 read_grid(std::istream& is) {
  Grid3 g;
  g.nx = binio::read_le<std::uint32_t>(is, "extent");
  g.ny = binio::read_le<std::uint32_t>(is, "extent");
  g.nz = binio::read_le<std::uint32_t>(is, "extent");
  if (g.nx == 0 || g.ny == 0 || g.nz == 0 || g.nx > kMaxExtent || g.ny > kMaxExtent ||
      g.nz > kMaxExtent)
    throw FormatError("implausible extents " + g.str());
  return g;
}

void write_grid(std::ostream& os, const Grid3& g) {
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.nx));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.ny));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.nz));
}
}  // namespace

std::vector<double> normalized_intensities(const Volume& vol) {
  const std::size_t n = vol.intensities.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  double mean = 0.0;
  for (float v : vol.intensities) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : vol.intensities) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (std::size_t i = 0; i < n; ++i) out[i] = (vol.intensities[i] - mean) * inv;
  return out;
}

LabelMask upsample2(const LabelMask& half, const Grid3& full) {
  if (full.half() != half.grid || !full.all_even())
    throw ShapeError("upsample2: " + half.grid.str() + " is not half of " + full.str());
  LabelMask out{full, half.classes, std::vector<std::uint8_t>(full.numel())};
  for (std::size_t i = 0; i < full.numel(); ++i) {
    const Voxel v = full.voxel(i);
    out.labels[i] = half.labels[half.grid.index(Voxel{v.x / 2, v.y / 2, v.z / 2})];
  }
  return out;
}

void write_volume(std::ostream& os, const Volume& vol) {
  if (vol.intensities.size() != vol.grid.numel()) throw ShapeError("volume data/extent mismatch");
  binio::write_magic(os, kVolumeMagic);
  write_grid(os, vol.grid);
  binio::write_le<std::uint8_t>(os, 0);
  binio::write_bytes(os, vol.intensities.data(), vol.intensities.size() * sizeof(float));
}

Volume read_volume(std::istream& is) {
  binio::expect_magic(is, kVolumeMagic);
  Volume vol;
  vol.grid = read_grid(is);
  const auto dtype = binio::read_le<std::uint8_t>(is, "dtype");
  if (dtype != 0) throw FormatError("unsupported volume dtype tag " + std::to_string(dtype));
  vol.intensities.resize(vol.grid.numel());
  binio::read_bytes(is, vol.intensities.data(), vol.intensities.size() * sizeof(float), "intensities");
  for (float v : vol.intensities)
    if (!std::isfinite(v)) throw FormatError("non-finite intensity in volume");
  return vol;
}

void save_volume(const std::filesystem::path& path, const Volume& vol) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_volume(os, vol);
}

Volume load_volume(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open volume " + path.string());
  return read_volume(is);
}

void write_labels(std::ostream& os, const LabelMask& mask) {
  if (mask.labels.size() != mask.grid.numel()) throw ShapeError("label data/extent mismatch");
  binio::write_magic(os, kLabelMagic);
  write_grid(os, mask.grid);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(mask.classes));
  binio::write_bytes(os, mask.labels.data(), mask.labels.size());
}

LabelMask read_labels(std::istream& is) {
  binio::expect_magic(is, kLabelMagic);
  LabelMask mask;
  mask.grid = read_grid(is);
  const auto classes = binio::read_le<std::uint32_t>(is, "class count");
  if (classes < 1 || classes > 255) throw FormatError("implausible class count");
  mask.classes = static_cast<int>(classes);
  mask.labels.resize(mask.grid.numel());
  binio::read_bytes(is, mask.labels.data(), mask.labels.size(), "labels");
  for (auto l : mask.labels)
    if (l >= classes) throw FormatError("label " + std::to_string(l) + " >= class count");
  return mask;
}

void save_labels(const std::filesystem::path& path, const LabelMask& mask) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_labels(os, mask);
}

LabelMask load_labels(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open label mask " + path.string());
  return read_labels(is);
}

}  // namespace tis
