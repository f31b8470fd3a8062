#include <doctest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "tis/error.hpp"
#include "tis/params.hpp"
#include "tis/volume.hpp"

using namespace tis;
using tis::testing::random_tensor;

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(4);
  ParamStore s;
  s.add("b.weights", random_tensor({3, 5}, rng, -1e3, 1e3));
  s.add("a.bias", random_tensor({1, 5}, rng));
  s.add("c.scalar", Tensor::scalar(-0.0));
  std::stringstream ss;
  write_checkpoint(ss, s);
  const ParamStore r = read_checkpoint(ss);
  REQUIRE(r.size() == 3);
  for (const auto& [name, p] : s) {
    const auto& q = r.get(name);
    CHECK(q.value.shape() == p.value.shape());
    CHECK(std::memcmp(q.value.storage().data(), p.value.storage().data(),
                      p.value.numel() * sizeof(double)) == 0);
    CHECK(q.grad.shape() == p.value.shape());
  }
}

TEST_CASE("checkpoint rejects bad magic and truncation") {
  ParamStore s;
  s.add("w", Tensor::matrix({{1, 2}}));
  std::stringstream ss;
  write_checkpoint(ss, s);
  std::string bytes = ss.str();

  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream b1(bad);
  CHECK_THROWS_AS(read_checkpoint(b1), FormatError);

  for (std::size_t cut : {std::size_t{4}, std::size_t{10}, bytes.size() - 1}) {
    std::istringstream t(bytes.substr(0, cut));
    CHECK_THROWS_AS(read_checkpoint(t), FormatError);
  }
}

TEST_CASE("missing checkpoint is an io error naming the path") {
  try {
    load_checkpoint("/nonexistent/dir/model.ckpt");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing checkpoint") != std::string::npos);
  }
}

TEST_CASE("volume and label files round trip") {
  Rng rng(8);
  const Grid3 g{4, 6, 2};
  Volume v{g, std::vector<float>(g.numel())};
  for (auto& x : v.intensities) x = static_cast<float>(rng.normal());
  const LabelMask m = tis::testing::random_mask(g, 4, rng);

  const auto dir = tis::testing::temp_dir("io");
  save_volume(dir / "a.vol", v);
  save_labels(dir / "a.lbl", m);
  CHECK(load_volume(dir / "a.vol") == v);
  CHECK(load_labels(dir / "a.lbl") == m);

  std::stringstream ss;
  write_labels(ss, m);
  std::string bytes = ss.str();
  std::istringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_labels(cut), FormatError);
  std::istringstream wrong(bytes);
  CHECK_THROWS_AS(read_volume(wrong), FormatError);
  CHECK_THROWS_AS(load_volume(dir / "missing.vol"), IoError);
}

TEST_CASE("labels outside the class range are rejected") {
  LabelMask m{{2, 2, 2}, 3, std::vector<std::uint8_t>(8, 0)};
  m.labels[5] = 3;
  std::stringstream ss;
  write_labels(ss, m);
  CHECK_THROWS_AS(read_labels(ss), FormatError);
}
