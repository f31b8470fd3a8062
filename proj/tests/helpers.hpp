#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tis/autodiff.hpp"
#include "tis/tensor.hpp"
#include "tis/volume.hpp"

namespace tis::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

/// ||a - b|| / max(||a||, ||b||), or the absolute difference when both norms
/// are below 1e-10.
inline double relative_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  return denom < 1e-10 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

/// Builds a scalar loss from leaf inputs on a fresh graph.
using LossFn = std::function<Var(Graph&, const std::vector<Var>&)>;

inline double eval_loss(const LossFn& f, const std::vector<Tensor>& xs) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& x : xs) vars.push_back(g.constant(x));
  return f(g, vars).value()[0];
}

/// Worst relative error between analytic and central-difference gradients over
/// all inputs.
inline double gradient_check(const LossFn& f, std::vector<Tensor> xs, double h = 1e-5) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& x : xs) vars.push_back(g.input(x));
  g.backward(f(g, vars));
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor analytic = g.grad(vars[k]);
    Tensor numeric(xs[k].shape());
    for (std::size_t i = 0; i < xs[k].numel(); ++i) {
      const double orig = xs[k][i];
      xs[k][i] = orig + h;
      const double up = eval_loss(f, xs);
      xs[k][i] = orig - h;
      const double down = eval_loss(f, xs);
      xs[k][i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

inline LabelMask random_mask(const Grid3& g, int classes, Rng& rng, double p_fg = 0.5) {
  LabelMask m{g, classes, std::vector<std::uint8_t>(g.numel(), 0)};
  for (auto& l : m.labels)
    if (rng.uniform() < p_fg) l = static_cast<std::uint8_t>(rng.uniform_int(1, classes - 1));
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tis_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tis::testing
