#pragma once

#include <map>
#include <string>

#include "tis/params.hpp"

namespace tis {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Moment estimates are kept per parameter
/// name, so the same optimizer can be reused across steps on one store.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// One update of every parameter in `params` using its current grad.
  /// Throws NumericError (and leaves params untouched) if any grad is
  /// non-finite.
  void step(ParamStore& params, double lr);

  const AdamWConfig& config() const noexcept { return cfg_; }
  long steps_taken(const std::string& name) const;

 private:
  struct Moments {
    Tensor m, v;
    long t = 0;
  };
  AdamWConfig cfg_;
  std::map<std::string, Moments> state_;
};

/// lr * factor^(floor(epoch / period)).
double step_decay_lr(double base_lr, double factor, int period, int epoch);

}  // namespace tis
