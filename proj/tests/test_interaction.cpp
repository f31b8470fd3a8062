#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "tis/error.hpp"
#include "tis/interaction.hpp"

using namespace tis;

namespace {

LabelMask blank(const Grid3& g, int classes = 3) {
  return {g, classes, std::vector<std::uint8_t>(g.numel(), 0)};
}

// Thick C in the xy-plane extruded along z; its centroid falls in the gap.
LabelMask c_shape() {
  LabelMask m = blank({16, 16, 8});
  for (std::int64_t z = 1; z <= 6; ++z)
    for (std::int64_t y = 2; y <= 13; ++y)
      for (std::int64_t x = 2; x <= 13; ++x) {
        const bool gap = x >= 5 && y >= 5 && y <= 10;
        if (!gap) m.labels[m.grid.index(Voxel{x, y, z})] = 1;
      }
  return m;
}

std::int64_t chebyshev(const Voxel& a, const Voxel& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
}

RefinerConfig small_config() {
  RefinerConfig c;
  c.width = 8;
  c.layers = 1;
  c.ffn_hidden = 8;
  c.ce_hidden = 6;
  c.crop = {8, 8, 8};
  return c;
}

EncoderOutput blob_output(const Grid3& g, Rng& rng) {
  EncoderOutput out{g, Tensor({g.numel(), 3}), tis::testing::random_tensor({g.half().numel(), 8}, rng)};
  for (std::size_t i = 0; i < g.numel(); ++i) {
    const Voxel v = g.voxel(i);
    const bool fg = v.x >= 4 && v.x < 10 && v.y >= 4 && v.y < 10 && v.z >= 4 && v.z < 10;
    out.mask_logits.at(i, fg ? 1 : 0) = 1.0;
  }
  return out;
}

}  // namespace

TEST_CASE("components match a union-find oracle") {
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    const Grid3 g{12, 12, 12};
    const double p = rng.uniform(0.05, 0.6);
    ErrorMap e{g, std::vector<std::uint8_t>(g.numel())};
    for (auto& w : e.wrong) w = rng.uniform() < p;
    for (int conn : {6, 26}) {
      const Components c = components(e, conn);
      const auto ref = oracle::components(g, e.wrong, conn);
      CHECK(c.ids == ref.ids);
      CHECK(c.sizes == ref.sizes);
    }
  }
  CHECK_THROWS_AS(components(ErrorMap{{2, 2, 2}, std::vector<std::uint8_t>(8)}, 18), ConfigError);
}

TEST_CASE("diagonal neighbours join only under 26-connectivity") {
  ErrorMap e{{3, 3, 3}, std::vector<std::uint8_t>(27, 0)};
  e.wrong[0] = 1;
  e.wrong[e.grid.index(1, 1, 1)] = 1;
  CHECK(components(e, 6).count() == 2);
  CHECK(components(e, 26).count() == 1);
}

TEST_CASE("click lands on the centre of a cube error") {
  const Grid3 g{10, 10, 10};
  const LabelMask pred = blank(g);
  LabelMask gt = blank(g);
  for (std::int64_t z = 2; z <= 6; ++z)
    for (std::int64_t y = 2; y <= 6; ++y)
      for (std::int64_t x = 2; x <= 6; ++x) gt.labels[g.index(Voxel{x, y, z})] = 2;
  Rng rng(1);
  const auto c = simulate_click(pred, gt, {0, 6}, rng);
  REQUIRE(c);
  CHECK(c->position == Voxel{4, 4, 4});
  CHECK(c->category == 2);
}

TEST_CASE("click on a corrected mask reports background") {
  const Grid3 g{6, 6, 6};
  LabelMask pred = blank(g);
  const LabelMask gt = blank(g);
  pred.labels[g.index(3, 3, 3)] = 1;
  Rng rng(1);
  const auto c = simulate_click(pred, gt, {0, 6}, rng);
  REQUIRE(c);
  CHECK(c->position == Voxel{3, 3, 3});
  CHECK(c->category == 0);
}

TEST_CASE("non-convex error falls back to an interior voxel") {
  const LabelMask gt = c_shape();
  const LabelMask pred = blank(gt.grid);
  const Grid3 g = gt.grid;
  // Rounded centroid sits in the gap of the C.
  double sx = 0, sy = 0, sz = 0, n = 0;
  for (std::size_t i = 0; i < g.numel(); ++i)
    if (gt.labels[i]) {
      const Voxel v = g.voxel(i);
      sx += v.x, sy += v.y, sz += v.z, n += 1;
    }
  const Voxel centroid{std::llround(sx / n), std::llround(sy / n), std::llround(sz / n)};
  REQUIRE(gt.at(centroid) == 0);
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(s);
    const auto c = simulate_click(pred, gt, {0, 6}, rng);
    REQUIRE(c);
    CHECK(gt.at(c->position) == 1);
    CHECK(c->category == 1);
    for (const Voxel o : {Voxel{1, 0, 0}, Voxel{-1, 0, 0}, Voxel{0, 1, 0}, Voxel{0, -1, 0}, Voxel{0, 0, 1},
                          Voxel{0, 0, -1}})
      CHECK(gt.at({c->position.x + o.x, c->position.y + o.y, c->position.z + o.z}) == 1);
  }
}

TEST_CASE("converged prediction yields no click") {
  Rng rng(3);
  const LabelMask m = tis::testing::random_mask({6, 6, 6}, 3, rng);
  CHECK_FALSE(simulate_click(m, m, {}, rng).has_value());
  CHECK_THROWS_AS(simulate_click(m, blank({6, 6, 4}), {}, rng), ShapeError);
  CHECK_THROWS_AS(simulate_click(m, m, {-1, 6}, rng), ConfigError);
}

TEST_CASE("simulated clicks satisfy the click contract") {
  for (int t = 0; t < 300; ++t) {
    Rng gen(static_cast<std::uint64_t>(t));
    const Grid3 g{10, 9, 8};
    const LabelMask pred = tis::testing::random_mask(g, 3, gen, gen.uniform(0.0, 0.3));
    const LabelMask gt = tis::testing::random_mask(g, 3, gen, gen.uniform(0.0, 0.3));
    const SimulatorConfig cfg{static_cast<int>(gen.uniform_int(0, 4)), gen.uniform() < 0.5 ? 6 : 26};
    Rng rng(static_cast<std::uint64_t>(t) + 5000);
    const auto c = simulate_click(pred, gt, cfg, rng);
    if (pred == gt) {
      CHECK_FALSE(c);
      continue;
    }
    REQUIRE(c);
    std::vector<std::uint8_t> wrong(g.numel());
    for (std::size_t i = 0; i < g.numel(); ++i) wrong[i] = pred.labels[i] != gt.labels[i];
    const auto ref = oracle::components(g, wrong, cfg.connectivity);
    const auto largest = static_cast<std::int32_t>(
        std::max_element(ref.sizes.begin(), ref.sizes.end()) - ref.sizes.begin() + 1);
    CHECK(ref.ids[g.index(c->position)] == largest);
    CHECK(c->category == gt.at(c->position));

    double sx = 0, sy = 0, sz = 0, n = 0;
    std::vector<Voxel> interior;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (ref.ids[i] != largest) continue;
      const Voxel v = g.voxel(i);
      sx += v.x, sy += v.y, sz += v.z, n += 1;
      bool in = true;
      for (const Voxel o : {Voxel{1, 0, 0}, Voxel{-1, 0, 0}, Voxel{0, 1, 0}, Voxel{0, -1, 0}, Voxel{0, 0, 1},
                            Voxel{0, 0, -1}}) {
        const Voxel nb{v.x + o.x, v.y + o.y, v.z + o.z};
        in = in && g.contains(nb) && ref.ids[g.index(nb)] == largest;
      }
      if (in) interior.push_back(v);
    }
    const Voxel centroid{std::llround(sx / n), std::llround(sy / n), std::llround(sz / n)};
    const bool near = chebyshev(c->position, centroid) <= cfg.disturbance;
    const bool fallback = interior.empty() || std::find(interior.begin(), interior.end(), c->position) != interior.end();
    CHECK((near || fallback));
  }
}

TEST_CASE("class dice per label") {
  LabelMask a = blank({2, 2, 1}), b = blank({2, 2, 1});
  a.labels = {0, 1, 1, 2};
  b.labels = {0, 1, 2, 2};
  const auto d = class_dice(a, b);
  REQUIRE(d.size() == 3);
  CHECK(d[0] == 1.0);
  CHECK(d[1] == doctest::Approx(2.0 / 3.0));
  CHECK(d[2] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("sessions are deterministic and replayable") {
  const RefinerConfig cfg = small_config();
  const ParamStore s = init_refiner(cfg, 5);
  Rng data(6);
  const Grid3 g{16, 16, 16};
  const auto enc = blob_output(g, data);
  LabelMask gt = blank(g);
  for (std::size_t i = 0; i < g.numel(); ++i) {
    const Voxel v = g.voxel(i);
    if (v.x >= 3 && v.x < 11 && v.y >= 5 && v.y < 9 && v.z >= 4 && v.z < 12) gt.labels[i] = v.x < 7 ? 1 : 2;
  }
  Rng r1(9), r2(9);
  const auto a = session_run(enc, gt, s, cfg, 5, {}, r1);
  const auto b = session_run(enc, gt, s, cfg, 5, {}, r2);
  REQUIRE(a.steps.size() == 6);
  CHECK(a.steps[0].clicks.empty());
  CHECK(a.steps[0].prediction == automatic_mask(enc));
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(a.steps[t].prediction == b.steps[t].prediction);
    CHECK(a.steps[t].dice == b.steps[t].dice);
    CHECK(a.steps[t].clicks.size() == t);
  }
  const std::string text = trace_to_jsonl(a);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  const ClickSet clicks = clicks_from_jsonl(text);
  CHECK(clicks == a.steps.back().clicks);
  const auto replay = session_replay(enc, &gt, s, cfg, clicks);
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    CHECK(replay.steps[t].prediction == a.steps[t].prediction);
    CHECK(replay.steps[t].dice == a.steps[t].dice);
  }
  const auto no_gt = session_replay(enc, nullptr, s, cfg, clicks);
  CHECK(no_gt.steps.back().dice.empty());
  CHECK(no_gt.steps.back().prediction == a.steps.back().prediction);
  Rng r3(9);
  CHECK_THROWS_AS(session_run(enc, gt, s, cfg, 0, {}, r3), ContractError);
  CHECK_THROWS_AS(clicks_from_jsonl("{not json\n"), FormatError);
}

TEST_CASE("session stops when the prediction is perfect") {
  const RefinerConfig cfg = small_config();
  const ParamStore s = init_refiner(cfg, 5);
  Rng data(6);
  const auto enc = blob_output({16, 16, 16}, data);
  const LabelMask gt = automatic_mask(enc);
  Rng r(1);
  const auto tr = session_run(enc, gt, s, cfg, 4, {}, r);
  CHECK(tr.converged);
  CHECK(tr.steps.size() == 1);
}
