#include "tis/optim.hpp"

#include <cmath>

#include "tis/error.hpp"

namespace tis {

void AdamW::step(ParamStore& params, double lr) {
  for (const auto& [name, p] : params)
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for " + name + "; step aborted");

  for (auto& [name, p] : params) {
    auto& st = state_[name];
    if (st.t == 0) {
      st.m = Tensor(p.value.shape());
      st.v = Tensor(p.value.shape());
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
    const double decay = 1.0 - lr * cfg_.weight_decay;
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = st.m.data();
    auto v = st.v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = w[i] * decay - lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

long AdamW::steps_taken(const std::string& name) const {
  auto it = state_.find(name);
  return it == state_.end() ? 0 : it->second.t;
}

double step_decay_lr(double base_lr, double factor, int period, int epoch) {
  if (period <= 0) return base_lr;
  return base_lr * std::pow(factor, static_cast<double>(epoch / period));
}

}  // namespace tis
