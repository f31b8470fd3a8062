#pragma once

// Independent reference implementations the library is checked against.
// Each one is written the slow, obvious way and shares no code with src/.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "tis/params.hpp"
#include "tis/volume.hpp"

namespace tis::oracle {

/// Set-based Dice.
inline double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::set<std::size_t> pa, pb, both;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) pa.insert(i);
    if (b[i]) pb.insert(i);
  }
  std::set_intersection(pa.begin(), pa.end(), pb.begin(), pb.end(), std::inserter(both, both.end()));
  if (pa.empty() && pb.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(pa.size() + pb.size());
}

struct Labelling {
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> sizes;
};

/// Union-find connected components with ids numbered by first voxel in grid order.
inline Labelling components(const Grid3& g, const std::vector<std::uint8_t>& on, int connectivity) {
  std::vector<std::size_t> parent(g.numel());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < g.numel(); ++i) {
    if (!on[i]) continue;
    const Voxel v = g.voxel(i);
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const auto d = std::abs(dx) + std::abs(dy) + std::abs(dz);
          if (d == 0 || (connectivity == 6 && d > 1)) continue;
          const Voxel n{v.x + dx, v.y + dy, v.z + dz};
          if (!g.contains(n) || !on[g.index(n)]) continue;
          parent[find(i)] = find(g.index(n));
        }
  }
  Labelling out;
  out.ids.assign(g.numel(), 0);
  std::vector<std::int32_t> root_id(g.numel(), 0);
  for (std::size_t i = 0; i < g.numel(); ++i) {
    if (!on[i]) continue;
    const std::size_t r = find(i);
    if (root_id[r] == 0) {
      out.sizes.push_back(0);
      root_id[r] = static_cast<std::int32_t>(out.sizes.size());
    }
    out.ids[i] = root_id[r];
    ++out.sizes[static_cast<std::size_t>(root_id[r] - 1)];
  }
  return out;
}

// Plain-loop reference for the label-assignment step.
using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline Mat mat_mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline double gelu_ref(double x) {
  const double pi = std::acos(-1.0);
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / pi) * (x + 0.044715 * x * x * x)));
}

inline Mat embed_ref(const ParamStore& s, int layer, int C) {
  const std::string pre = "refiner.l" + std::to_string(layer) + ".la.emb";
  const Mat w1 = to_mat(s.get(pre + "1.w").value), w2 = to_mat(s.get(pre + "2.w").value);
  const Mat b1 = to_mat(s.get(pre + "1.b").value), b2 = to_mat(s.get(pre + "2.b").value);
  Mat e;
  for (int c = 0; c < C; ++c) {
    // One-hot input selects row c of w1.
    std::vector<double> h(w1[0].size());
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = gelu_ref(w1[static_cast<std::size_t>(c)][j] + b1[0][j]);
    std::vector<double> o(w2[0].size(), 0.0);
    for (std::size_t j = 0; j < o.size(); ++j) {
      o[j] = b2[0][j];
      for (std::size_t k = 0; k < h.size(); ++k) o[j] += h[k] * w2[k][j];
    }
    e.push_back(o);
  }
  return e;
}

inline Mat label_assign_ref(const Mat& tokens, const Mat& clicks, const std::vector<int>& labels,
                     const std::vector<std::uint8_t>& auto_half, const ParamStore& s, int layer,
                     int C, double alpha) {
  const std::string pre = "refiner.l" + std::to_string(layer) + ".la.";
  const Mat q = mat_mul(tokens, to_mat(s.get(pre + "wq").value));
  const Mat k = mat_mul(clicks, to_mat(s.get(pre + "wk").value));
  const Mat e = embed_ref(s, layer, C);
  const double m = static_cast<double>(tokens[0].size());
  Mat out(tokens.size(), std::vector<double>(e[0].size(), 0.0));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::vector<double> logit(clicks.size(), 0.0);
    for (std::size_t j = 0; j < clicks.size(); ++j) {
      for (std::size_t d = 0; d < q[i].size(); ++d) logit[j] += q[i][d] * k[j][d];
      logit[j] /= std::sqrt(m);
    }
    const double mx = *std::max_element(logit.begin(), logit.end());
    double z = 0.0;
    for (double& v : logit) z += (v = std::exp(v - mx));
    for (std::size_t d = 0; d < out[i].size(); ++d) {
      double copied = 0.0;
      for (std::size_t j = 0; j < clicks.size(); ++j)
        copied += logit[j] / z * e[static_cast<std::size_t>(labels[j])][d];
      out[i][d] = alpha * copied + (1.0 - alpha) * e[auto_half[i]][d];
    }
  }
  return out;
}

}  // namespace tis::oracle
