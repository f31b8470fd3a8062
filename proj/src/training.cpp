#include "tis/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "tis/error.hpp"

namespace tis {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<int> to_targets(std::span<const std::uint8_t> labels) {
  return {labels.begin(), labels.end()};
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (encoder_epochs < 0 || refiner_epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr >= 0.0) || !(lr_decay > 0.0) || lr_period < 1 || batch_size < 1 || !(weight_decay >= 0.0))
    throw ConfigError("train: lr >= 0, decay > 0, period >= 1, batch >= 1, weight decay >= 0");
  if (max_train_clicks < 1) throw ConfigError("train: max_train_clicks must be >= 1");
}

TrainResult train_encoder(const std::vector<Case>& data, const EncoderConfig& ecfg,
                          const TrainConfig& tcfg, std::uint64_t seed, const EpochLog& log) {
  tcfg.validate();
  if (data.empty()) throw ContractError("train_encoder: empty dataset");
  TrainResult res{init_encoder(ecfg, seed), {}};
  AdamW opt({0.9, 0.999, 1e-8, tcfg.weight_decay});
  Rng rng = Rng(seed).fork(1);

  std::vector<Tensor> inputs;
  std::vector<std::vector<int>> targets;
  for (const auto& c : data) {
    inputs.emplace_back(Shape{c.volume.grid.numel(), 1}, normalized_intensities(c.volume));
    targets.push_back(to_targets(c.labels.labels));
  }

  const auto t0 = Clock::now();
  const auto batch = static_cast<std::size_t>(tcfg.batch_size);
  for (int epoch = 0; epoch < tcfg.encoder_epochs; ++epoch) {
    const double lr = step_decay_lr(tcfg.lr, tcfg.lr_decay, tcfg.lr_period, epoch);
    const auto order = shuffled(data.size(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      try {
        Graph g;
        ParamBinder binder(g, res.params);
        Var loss;
        for (std::size_t b = start; b < end; ++b) {
          const std::size_t i = order[b];
          Var x = g.constant(inputs[i]);
          EncoderVars out = encoder_forward(x, data[i].volume.grid, binder);
          Var ce = ad::cross_entropy(out.mask_logits, targets[i]);
          loss = loss.valid() ? ad::add(loss, ce) : ce;
        }
        loss = ad::scale(loss, 1.0 / static_cast<double>(end - start));
        g.backward(loss);
        opt.step(res.params, lr);
        total += loss.value()[0];
        ++batches;
      } catch (const NumericError& e) {
        throw NumericError("encoder training diverged in epoch " + std::to_string(epoch) + ": " +
                           e.what());
      }
    }
    res.epoch_loss.push_back(total / static_cast<double>(batches));
    if (log) log(epoch, res.epoch_loss.back(), seconds_since(t0));
  }
  return res;
}

ClickSet training_clicks(const LabelMask& automatic, const LabelMask& gt, int count,
                         const SimulatorConfig& sim, Rng& rng, bool corrected) {
  ClickSet clicks;
  LabelMask pred = automatic;
  for (int i = 0; i < count; ++i) {
    auto click = simulate_click(pred, gt, sim, rng);
    if (!click) break;
    clicks.push_back(*click);
    if (!corrected) continue;
    const Components comps = components(error_map(pred, gt), sim.connectivity);
    const auto id = comps.ids[pred.grid.index(click->position)];
    for (std::size_t v = 0; v < pred.labels.size(); ++v)
      if (comps.ids[v] == id) pred.labels[v] = gt.labels[v];
  }
  if (clicks.empty()) {
    const auto v = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(gt.labels.size()) - 1));
    clicks.push_back({gt.grid.voxel(v), gt.labels[v]});
  }
  return clicks;
}

TrainResult train_refiner(const std::vector<Case>& data, const ParamStore& encoder,
                          const RefinerConfig& rcfg, const TrainConfig& tcfg,
                          const SimulatorConfig& sim, Ablation ablation, std::uint64_t seed,
                          const EpochLog& log) {
  tcfg.validate();
  rcfg.validate();
  sim.validate();
  if (data.empty()) throw ContractError("train_refiner: empty dataset");
  TrainResult res{init_refiner(rcfg, seed, ablation), {}};
  AdamW opt({0.9, 0.999, 1e-8, tcfg.weight_decay});
  Rng order_rng = Rng(seed).fork(1);
  Rng click_rng = Rng(seed).fork(2);

  std::vector<EncoderOutput> encoded;
  std::vector<LabelMask> automatic;
  for (const auto& c : data) {
    encoded.push_back(encode(c.volume, encoder));
    automatic.push_back(automatic_mask(encoded.back()));
  }

  const auto t0 = Clock::now();
  const auto batch = static_cast<std::size_t>(tcfg.batch_size);
  for (int epoch = 0; epoch < tcfg.refiner_epochs; ++epoch) {
    const double lr = step_decay_lr(tcfg.lr, tcfg.lr_decay, tcfg.lr_period, epoch);
    const auto order = shuffled(data.size(), order_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      try {
        Graph g;
        ParamBinder binder(g, res.params);
        Var loss;
        std::size_t used = 0;
        for (std::size_t b = start; b < end; ++b) {
          const std::size_t i = order[b];
          const auto count = static_cast<int>(click_rng.uniform_int(1, tcfg.max_train_clicks));
          const ClickSet clicks = training_clicks(automatic[i], data[i].labels, count, sim,
                                                   click_rng, tcfg.corrected_clicks);
          const Roi window = fit_crop(roi_for(automatic[i], clicks, rcfg.crop_margin), rcfg.crop,
                                      encoded[i].grid);
          ClickSet local;
          for (const auto& c : clicks)
            if (window.contains(c.position))
              local.push_back({{c.position.x - window.lo.x, c.position.y - window.lo.y,
                                c.position.z - window.lo.z},
                               c.category});
          if (local.empty()) continue;
          const EncoderOutput sub = crop_output(encoded[i], window);
          std::vector<int> targets(rcfg.crop.numel());
          for (std::size_t v = 0; v < targets.size(); ++v) {
            const Voxel p = rcfg.crop.voxel(v);
            targets[v] = data[i].labels.at({p.x + window.lo.x, p.y + window.lo.y, p.z + window.lo.z});
          }
          RefineTrace tr = refine_forward(sub, local, binder, rcfg, ablation);
          Var ce = ad::cross_entropy(tr.logits, targets);
          loss = loss.valid() ? ad::add(loss, ce) : ce;
          ++used;
        }
        if (used == 0) continue;
        loss = ad::scale(loss, 1.0 / static_cast<double>(used));
        g.backward(loss);
        opt.step(res.params, lr);
        total += loss.value()[0];
        ++batches;
      } catch (const NumericError& e) {
        throw NumericError("refiner training diverged in epoch " + std::to_string(epoch) + ": " +
                           e.what());
      }
    }
    res.epoch_loss.push_back(batches ? total / static_cast<double>(batches) : 0.0);
    if (log) log(epoch, res.epoch_loss.back(), seconds_since(t0));
  }
  return res;
}

}  // namespace tis
