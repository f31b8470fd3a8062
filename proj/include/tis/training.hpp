#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tis/encoder.hpp"
#include "tis/interaction.hpp"
#include "tis/optim.hpp"
#include "tis/refiner.hpp"
#include "tis/synthetic.hpp"

namespace tis {

struct TrainConfig {
  int encoder_epochs = 20;
  int refiner_epochs = 80;
  double lr = 1e-3;
  double lr_decay = 0.9;
  int lr_period = 10;  // epochs between decays
  int batch_size = 1;
  double weight_decay = 0.01;
  int max_train_clicks = 10;  // clicks per refiner sample drawn uniformly in [1, max]
  // false: every training click is simulated against the automatic mask.
  // true: after each click its error component is set to ground truth, so the
  // next click targets the next-largest error.
  bool corrected_clicks = true;

  void validate() const;
};

struct TrainResult {
  ParamStore params;
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Called once per finished epoch with (epoch, mean loss, seconds elapsed).
using EpochLog = std::function<void(int, double, double)>;

/// Pixelwise cross-entropy training of the encoder with AdamW and step decay.
/// NumericError on divergence.
TrainResult train_encoder(const std::vector<Case>& data, const EncoderConfig& ecfg,
                          const TrainConfig& tcfg, std::uint64_t seed, const EpochLog& log = {});

/// Clicks for one refiner training sample: up to `count` simulated clicks
/// against the automatic mask, or with `corrected` against a mask whose
/// previously clicked error components were replaced by ground truth. Falls
/// back to one click at a random voxel when the automatic mask is perfect.
ClickSet training_clicks(const LabelMask& automatic, const LabelMask& gt, int count,
                         const SimulatorConfig& sim, Rng& rng, bool corrected = false);

/// Trains the refiner on frozen encoder outputs. Each step draws
/// 1..max_train_clicks simulated clicks, crops around foreground and clicks,
/// and minimizes pixelwise cross-entropy of the refined logits.
TrainResult train_refiner(const std::vector<Case>& data, const ParamStore& encoder,
                          const RefinerConfig& rcfg, const TrainConfig& tcfg,
                          const SimulatorConfig& sim, Ablation ablation, std::uint64_t seed,
                          const EpochLog& log = {});

}  // namespace tis
