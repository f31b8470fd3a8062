#include <doctest.h>

#include <cmath>

#include "tis/error.hpp"
#include "tis/optim.hpp"

using namespace tis;

namespace {
ParamStore scalar_store(double value, double grad) {
  ParamStore s;
  s.add("w", Tensor::matrix({{value}}));
  s.get("w").grad = Tensor::matrix({{grad}});
  return s;
}
}  // namespace

TEST_CASE("zero grad and zero decay leave params unchanged") {
  ParamStore s = scalar_store(0.7, 0.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  for (int i = 0; i < 5; ++i) opt.step(s, 1e-2);
  CHECK(s.get("w").value[0] == 0.7);
  CHECK(opt.steps_taken("w") == 5);
}

TEST_CASE("first step moves by lr times sign of grad") {
  // mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps).
  for (double g : {3.0, -0.02, 1e-3}) {
    ParamStore s = scalar_store(1.0, g);
    AdamW opt({0.9, 0.999, 1e-8, 0.0});
    opt.step(s, 1e-3);
    const double expected = 1.0 - 1e-3 * g / (std::abs(g) + 1e-8);
    CHECK(s.get("w").value[0] == doctest::Approx(expected).epsilon(1e-14));
    CHECK(std::abs(s.get("w").value[0] - (1.0 - 1e-3 * (g > 0 ? 1 : -1))) < 1e-7);
  }
}

TEST_CASE("decoupled decay with zero grad scales by 1 - lr*lambda") {
  ParamStore s = scalar_store(2.0, 0.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.1});
  opt.step(s, 0.01);
  CHECK(s.get("w").value[0] == doctest::Approx(2.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-15));
}

TEST_CASE("second step follows bias-corrected moments") {
  ParamStore s = scalar_store(0.0, 1.0);
  AdamW opt({0.9, 0.999, 1e-8, 0.0});
  opt.step(s, 0.1);
  s.get("w").grad = Tensor::matrix({{-2.0}});
  opt.step(s, 0.1);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -2.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 4.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  const double w1 = -0.1 * 1.0 / (1.0 + 1e-8);
  const double expected = w1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(s.get("w").value[0] == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("non-finite grad aborts the whole step") {
  ParamStore s;
  s.add("a", Tensor::matrix({{1.0}}));
  s.add("b", Tensor::matrix({{1.0}}));
  s.get("a").grad = Tensor::matrix({{0.5}});
  s.get("b").grad = Tensor::matrix({{NAN}});
  AdamW opt;
  CHECK_THROWS_AS(opt.step(s, 0.1), NumericError);
  CHECK(s.get("a").value[0] == 1.0);
  CHECK(opt.steps_taken("a") == 0);
}

TEST_CASE("step decay schedule") {
  CHECK(step_decay_lr(1e-3, 0.9, 10, 0) == 1e-3);
  CHECK(step_decay_lr(1e-3, 0.9, 10, 9) == 1e-3);
  CHECK(step_decay_lr(1e-3, 0.9, 10, 10) == doctest::Approx(9e-4).epsilon(1e-15));
  CHECK(step_decay_lr(1e-3, 0.9, 10, 25) == doctest::Approx(1e-3 * 0.81).epsilon(1e-15));
}
