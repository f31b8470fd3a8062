#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tis/interaction.hpp"
#include "tis/synthetic.hpp"

namespace tis {

/// Per-class Dice after 0..K clicks over an evaluation set.
struct MetricsReport {
  int max_clicks = 0;
  int classes = 0;
  // per_case[case][clicks][class]; a session that converged early carries its
  // last Dice forward.
  std::vector<std::vector<std::vector<double>>> per_case;
  std::vector<std::vector<double>> mean;  // [clicks][class]
  std::vector<std::vector<double>> std;   // population standard deviation

  /// "click_count class mean std" table, one row per (click count, class).
  std::string table() const;
  std::string to_json() const;
};

/// Runs a simulated session per case (rng stream `i` of `seed` for case i)
/// and aggregates Dice at every click count.
MetricsReport eval_curve(const std::vector<Case>& data, const ParamStore& encoder,
                         const ParamStore& refiner, const RefinerConfig& rcfg, int max_clicks,
                         const SimulatorConfig& sim, std::uint64_t seed,
                         std::vector<SessionTrace>* traces = nullptr);

}  // namespace tis
