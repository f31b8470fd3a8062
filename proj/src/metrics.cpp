#include "tis/metrics.hpp"

#include "tis/error.hpp"

namespace tis {

double dsc(std::span<const std::uint8_t> pred_region, std::span<const std::uint8_t> gt_region) {
  if (pred_region.size() != gt_region.size()) throw ShapeError("dsc: region sizes differ");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred_region.size(); ++i) {
    const bool a = pred_region[i] != 0, b = gt_region[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double dsc_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int cls) {
  if (pred.size() != gt.size()) throw ShapeError("dsc: mask sizes differ");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == cls, b = gt[i] == cls;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

}  // namespace tis
