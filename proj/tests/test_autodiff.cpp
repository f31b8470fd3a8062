#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "tis/autodiff.hpp"
#include "tis/error.hpp"

using namespace tis;
using tis::testing::gradient_check;
using tis::testing::LossFn;
using tis::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;
constexpr int kSeeds = 100;

// Weighted sum so every output element carries a distinct upstream gradient.
Var probe(Graph& g, Var y, std::uint64_t seed) {
  Rng r(seed ^ 0xABCDu);
  const Tensor& v = y.value();
  Tensor w(v.shape());
  for (double& x : w.storage()) x = r.uniform(-1.0, 1.0);
  return ad::sum(ad::mul(y, g.constant(w)));
}

void check_op(const std::string& name, const std::function<std::vector<Tensor>(Rng&)>& make,
              const std::function<Var(Graph&, const std::vector<Var>&)>& op) {
  INFO(name);
  double worst = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    Rng rng(static_cast<std::uint64_t>(s));
    auto xs = make(rng);
    LossFn f = [&](Graph& g, const std::vector<Var>& v) { return probe(g, op(g, v), s); };
    worst = std::max(worst, gradient_check(f, xs));
  }
  CHECK(worst < kGradTol);
}

std::vector<Tensor> one(Rng& r, Shape s) { return {random_tensor(std::move(s), r)}; }

}  // namespace

TEST_CASE("matmul examples") {
  Graph g;
  auto eye = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(ad::matmul(eye, a).value() == Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(ad::matmul(a, g.constant(Tensor::matrix({{5}, {6}}))).value() == Tensor::matrix({{17}, {39}}));
  auto x = g.constant(Tensor({2, 3}));
  try {
    ad::matmul(x, x);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax examples") {
  Graph g;
  auto s = ad::softmax_rows(g.constant(Tensor::matrix({{0, 0}, {std::log(2.0), 0}, {1000, 1000}})));
  const Tensor& v = s.value();
  CHECK(v.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(v.at(1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(v.at(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(v.at(2, 0) == 0.5);
  CHECK(v.at(2, 1) == 0.5);
}

TEST_CASE("softmax rows are stochastic and shift invariant") {
  for (int s = 0; s < 100; ++s) {
    Rng r(static_cast<std::uint64_t>(s));
    Graph g;
    Tensor x = random_tensor({5, 7}, r, -20.0, 20.0);
    Tensor shifted = x;
    const double c = r.uniform(-50.0, 50.0);
    for (double& v : shifted.storage()) v += c;
    const Tensor a = ad::softmax_rows(g.constant(x)).value();
    const Tensor b = ad::softmax_rows(g.constant(shifted)).value();
    for (std::size_t i = 0; i < 5; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(a.at(i, j) >= 0.0);
        CHECK(std::abs(a.at(i, j) - b.at(i, j)) <= 1e-12);
        sum += a.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("cross entropy examples") {
  Graph g;
  const std::vector<int> t0{0};
  CHECK(ad::cross_entropy(g.constant(Tensor({3, 4})), std::vector<int>{0, 1, 3}).value()[0] ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(ad::cross_entropy(g.constant(Tensor::matrix({{30, 0, 0}})), t0).value()[0] < 1e-9);
  CHECK(ad::cross_entropy(g.constant(Tensor::matrix({{1, 0}})), t0).value()[0] ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-14));
  CHECK(ad::cross_entropy(g.constant(Tensor::matrix({{1, 0}})), t0).value()[0] ==
        doctest::Approx(0.3133).epsilon(1e-4));
  CHECK_THROWS_AS(ad::cross_entropy(g.constant(Tensor({1, 2})), std::vector<int>{2}), IndexError);
  CHECK_THROWS_AS(ad::cross_entropy(g.constant(Tensor({1, 2})), std::vector<int>{-1}), IndexError);
}

TEST_CASE("backward examples") {
  ParamStore store;
  store.add("w", Tensor::matrix({{1.5, -2.0, 0.25}}));
  store.add("unused", Tensor::matrix({{3.0}}));
  Graph g;
  ParamBinder p(g, store);
  Var w = p("w");
  p("unused");
  g.backward(ad::sum(ad::mul(w, w)));
  CHECK(store.get("w").grad == Tensor::matrix({{3.0, -4.0, 0.5}}));
  CHECK(store.get("unused").grad == Tensor::matrix({{0.0}}));
  CHECK_THROWS_AS(g.backward(ad::sum(w)), ContractError);
  g.reset();
  CHECK(g.size() == 0);
}

TEST_CASE("backward overwrites stale gradients") {
  ParamStore store;
  store.add("w", Tensor::matrix({{2.0}}));
  store.get("w").grad = Tensor::matrix({{99.0}});
  Graph g;
  ParamBinder p(g, store);
  Var w = p("w");
  g.backward(ad::sum(ad::scale(w, 3.0)));
  CHECK(store.get("w").grad[0] == 3.0);
}

TEST_CASE("const binder yields constants") {
  ParamStore store;
  store.add("w", Tensor::matrix({{2.0}}));
  const ParamStore& cs = store;
  Graph g;
  ParamBinder p(g, cs);
  CHECK_FALSE(p.trainable());
  CHECK_FALSE(g.requires_grad(p("w")));
}

TEST_CASE("non-finite values are rejected at record time") {
  Graph g;
  Var x = g.constant(Tensor::matrix({{1e308, 1e308}}));
  CHECK_THROWS_AS(ad::scale(x, 10.0), NumericError);
}

TEST_CASE("ops are deterministic") {
  Rng r(9);
  const Tensor a = random_tensor({6, 5}, r), b = random_tensor({5, 4}, r);
  Graph g1, g2;
  CHECK(ad::softmax_rows(ad::matmul(g1.constant(a), g1.constant(b))).value() ==
        ad::softmax_rows(ad::matmul(g2.constant(a), g2.constant(b))).value());
}

TEST_CASE("gradient property: elementwise and matrix ops") {
  check_op("matmul", [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r), random_tensor({4, 2}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); });
  check_op("matmul_nt", [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 4}, r), random_tensor({5, 4}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::matmul_nt(v[0], v[1]); });
  check_op("transpose", [](Rng& r) { return one(r, {3, 4}); },
           [](Graph&, const std::vector<Var>& v) { return ad::transpose(v[0]); });
  check_op("add", [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); });
  check_op("sub", [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); });
  check_op("mul", [](Rng& r) { return std::vector<Tensor>{random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::mul(v[0], v[1]); });
  check_op("add_row", [](Rng& r) { return std::vector<Tensor>{random_tensor({4, 3}, r), random_tensor({1, 3}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::add_row(v[0], v[1]); });
  check_op("scale", [](Rng& r) { return one(r, {2, 2}); },
           [](Graph&, const std::vector<Var>& v) { return ad::scale(v[0], -1.7); });
  check_op("scale_by", [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 2}, r), random_tensor({1, 1}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::scale_by(v[0], v[1]); });
  check_op("affine", [](Rng& r) { return one(r, {2, 3}); },
           [](Graph&, const std::vector<Var>& v) { return ad::affine(v[0], -2.0, 0.5); });
}

TEST_CASE("gradient property: nonlinearities and normalization") {
  // Keep relu inputs away from the kink where the finite difference is undefined.
  check_op("relu",
           [](Rng& r) {
             Tensor t = random_tensor({3, 4}, r);
             for (double& v : t.storage()) v += v >= 0 ? 0.1 : -0.1;
             return std::vector<Tensor>{t};
           },
           [](Graph&, const std::vector<Var>& v) { return ad::relu(v[0]); });
  check_op("gelu", [](Rng& r) { return one(r, {3, 4}); },
           [](Graph&, const std::vector<Var>& v) { return ad::gelu(v[0]); });
  check_op("sigmoid", [](Rng& r) { return one(r, {3, 4}); },
           [](Graph&, const std::vector<Var>& v) { return ad::sigmoid(v[0]); });
  check_op("softmax_rows", [](Rng& r) { return one(r, {3, 5}); },
           [](Graph&, const std::vector<Var>& v) { return ad::softmax_rows(v[0]); });
  check_op("layer_norm_rows",
           [](Rng& r) {
             return std::vector<Tensor>{random_tensor({3, 6}, r), random_tensor({1, 6}, r),
                                        random_tensor({1, 6}, r)};
           },
           [](Graph&, const std::vector<Var>& v) { return ad::layer_norm_rows(v[0], v[1], v[2]); });
  check_op("linear",
           [](Rng& r) {
             return std::vector<Tensor>{random_tensor({4, 3}, r), random_tensor({3, 2}, r),
                                        random_tensor({1, 2}, r)};
           },
           [](Graph&, const std::vector<Var>& v) { return ad::linear(v[0], v[1], v[2]); });
}

TEST_CASE("gradient property: reductions, indexing and losses") {
  check_op("cross_entropy", [](Rng& r) { return one(r, {5, 3}); },
           [](Graph&, const std::vector<Var>& v) {
             return ad::cross_entropy(v[0], std::vector<int>{0, 2, 1, 1, 0});
           });
  check_op("sum", [](Rng& r) { return one(r, {2, 3}); },
           [](Graph&, const std::vector<Var>& v) { return ad::sum(v[0]); });
  check_op("mean", [](Rng& r) { return one(r, {2, 3}); },
           [](Graph&, const std::vector<Var>& v) { return ad::mean(v[0]); });
  check_op("gather_rows", [](Rng& r) { return one(r, {4, 3}); },
           [](Graph&, const std::vector<Var>& v) {
             return ad::gather_rows(v[0], std::vector<std::size_t>{3, 0, 3, 1});
           });
  check_op("concat_cols", [](Rng& r) { return std::vector<Tensor>{random_tensor({3, 2}, r), random_tensor({3, 1}, r)}; },
           [](Graph&, const std::vector<Var>& v) { return ad::concat_cols(v); });
  check_op("slice_cols", [](Rng& r) { return one(r, {3, 5}); },
           [](Graph&, const std::vector<Var>& v) { return ad::slice_cols(v[0], 1, 3); });
  check_op("reshape", [](Rng& r) { return one(r, {2, 6}); },
           [](Graph&, const std::vector<Var>& v) { return ad::reshape(v[0], {3, 4}); });
  check_op("im2col3d stride 1", [](Rng& r) { return one(r, {4 * 2 * 2, 2}); },
           [](Graph&, const std::vector<Var>& v) { return ad::im2col3d(v[0], {4, 2, 2}, 1); });
  check_op("im2col3d stride 2", [](Rng& r) { return one(r, {4 * 4 * 2, 1}); },
           [](Graph&, const std::vector<Var>& v) { return ad::im2col3d(v[0], {4, 4, 2}, 2); });
}

TEST_CASE("im2col3d layout") {
  // 3x3x3 grid holding each voxel's own index; the centre patch lists every
  // voxel, tap = kx + 3(ky + 3kz).
  const Grid3 g{3, 3, 3};
  Tensor x({27, 1});
  for (std::size_t i = 0; i < 27; ++i) x[i] = static_cast<double>(i) + 1.0;
  Graph gr;
  const Tensor cols = ad::im2col3d(gr.constant(x), g, 1).value();
  CHECK(cols.rows() == 27);
  CHECK(cols.cols() == 27);
  const std::size_t centre = g.index(1, 1, 1);
  for (std::size_t tap = 0; tap < 27; ++tap) CHECK(cols.at(centre, tap) == static_cast<double>(tap) + 1.0);
  // Corner (0,0,0): taps reaching x=-1, y=-1 or z=-1 are zero padding.
  CHECK(cols.at(0, 0) == 0.0);
  CHECK(cols.at(0, 13) == 1.0);
  CHECK(cols.at(0, 26) == static_cast<double>(g.index(1, 1, 1)) + 1.0);
  CHECK_THROWS(ad::im2col3d(gr.constant(x), g, 2));
}
