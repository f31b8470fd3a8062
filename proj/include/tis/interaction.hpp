#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tis/clicks.hpp"
#include "tis/encoder.hpp"
#include "tis/refiner.hpp"
#include "tis/tensor.hpp"
#include "tis/volume.hpp"

namespace tis {

/// Voxelwise disagreement between a prediction and the ground truth.
struct ErrorMap {
  Grid3 grid;
  std::vector<std::uint8_t> wrong;  // 1 where labels differ
};

ErrorMap error_map(const LabelMask& pred, const LabelMask& gt);

struct Components {
  std::vector<std::int32_t> ids;    // 0 = not in any component, else 1-based id
  std::vector<std::size_t> sizes;   // sizes[id - 1]
  std::size_t count() const noexcept { return sizes.size(); }
};

/// Connected components of the true voxels. Ids are assigned in order of each
/// component's first voxel in grid order. connectivity is 6 or 26.
Components components(const ErrorMap& err, int connectivity = 6);

struct SimulatorConfig {
  int disturbance = 10;  // max per-axis offset in voxels
  int connectivity = 6;
  void validate() const;
};

/// Simulated user. Picks the largest error component (smallest id on ties),
/// targets its rounded centroid plus a uniform per-axis offset in
/// [-disturbance, disturbance] clipped to the volume. If that point is not in
/// the component, a uniformly drawn interior voxel (all six neighbours in the
/// component) is used instead, or any component voxel if it has no interior.
/// The category is the ground-truth label at the chosen voxel. Returns nullopt
/// when pred equals gt (converged).
std::optional<Click> simulate_click(const LabelMask& pred, const LabelMask& gt,
                                    const SimulatorConfig& cfg, Rng& rng);

/// Per-class Dice; entry c compares the voxel sets labelled c.
std::vector<double> class_dice(const LabelMask& pred, const LabelMask& gt);

struct SessionStep {
  ClickSet clicks;  // interactions up to and including this step
  LabelMask prediction;
  std::vector<double> dice;
};

struct SessionTrace {
  std::vector<SessionStep> steps;  // steps[0] is the automatic mask, no clicks
  bool converged = false;          // stopped early because pred == gt
};

/// Iterated refinement with simulated clicks: step t adds one simulated click
/// against the step t-1 prediction and recomputes the refinement from the
/// full click set.
SessionTrace session_run(const EncoderOutput& enc, const LabelMask& gt, const ParamStore& refiner,
                         const RefinerConfig& rcfg, int n_clicks, const SimulatorConfig& scfg,
                         Rng& rng);

/// Same as session_run but with a fixed click list instead of the simulator.
SessionTrace session_replay(const EncoderOutput& enc, const LabelMask* gt,
                            const ParamStore& refiner, const RefinerConfig& rcfg,
                            const ClickSet& clicks);

/// One JSON object per line: step, click position, category, per-class Dice.
std::string trace_to_jsonl(const SessionTrace& trace);
/// Clicks recorded in a jsonl trace, in step order.
ClickSet clicks_from_jsonl(const std::string& text);

}  // namespace tis
