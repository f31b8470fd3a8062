#include "tis/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "tis/error.hpp"

namespace tis {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }
MutMap mmap(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void axpy(Tensor& dst, const Tensor& src, double s = 1.0) {
  auto d = dst.data();
  auto x = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * x[i];
}

}  // namespace

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Graph::record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Graph::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph_ != this) throw ContractError(std::string(op) + ": input from another graph");
    if (nodes_[in.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Graph::grad_ref(Var v) {
  Node& n = nodes_.at(v.id());
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

void Graph::backward(Var loss) {
  if (consumed_) throw ContractError("backward called twice without reset");
  if (loss.graph_ != this) throw ContractError("backward: loss belongs to another graph");
  if (value(loss).numel() != 1) throw ShapeError("backward: loss must be a scalar");
  consumed_ = true;
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  std::fill(grad_ref(loss).storage().begin(), grad_ref(loss).storage().end(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (auto& [p, id] : param_nodes_) {
    Parameter* param = nodes_[id].param;
    if (nodes_[id].has_grad)
      param->grad = nodes_[id].grad;
    else
      param->grad = Tensor(param->value.shape());
  }
}

void Graph::reset() {
  nodes_.clear();
  param_nodes_.clear();
  consumed_ = false;
}

Var ParamBinder::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  Var v = mutable_ ? graph_.param(mutable_->get(name)) : graph_.constant(store_->get(name).value);
  bound_.emplace(name, v);
  return v;
}

namespace ad {

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  if (A.cols() != B.rows())
    throw ShapeError("matmul: inner extents differ, " + shape_string(A.shape()) + " x " +
                     shape_string(B.shape()));
  Tensor C({A.rows(), B.cols()});
  mmap(C).noalias() = cmap(A) * cmap(B);
  return a.graph().record("matmul", std::move(C), {a, b}, [a, b](Graph& g, const Tensor& dC) {
    if (g.requires_grad(a)) mmap(g.grad_ref(a)).noalias() += cmap(dC) * cmap(g.value(b)).transpose();
    if (g.requires_grad(b)) mmap(g.grad_ref(b)).noalias() += cmap(g.value(a)).transpose() * cmap(dC);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul_nt");
  require_rank2(B, "matmul_nt");
  if (A.cols() != B.cols())
    throw ShapeError("matmul_nt: inner extents differ, " + shape_string(A.shape()) + " x " +
                     shape_string(B.shape()) + "^T");
  Tensor C({A.rows(), B.rows()});
  mmap(C).noalias() = cmap(A) * cmap(B).transpose();
  return a.graph().record("matmul_nt", std::move(C), {a, b}, [a, b](Graph& g, const Tensor& dC) {
    if (g.requires_grad(a)) mmap(g.grad_ref(a)).noalias() += cmap(dC) * cmap(g.value(b));
    if (g.requires_grad(b)) mmap(g.grad_ref(b)).noalias() += cmap(dC).transpose() * cmap(g.value(a));
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require_rank2(A, "transpose");
  Tensor T({A.cols(), A.rows()});
  mmap(T) = cmap(A).transpose();
  return a.graph().record("transpose", std::move(T), {a}, [a](Graph& g, const Tensor& dT) {
    mmap(g.grad_ref(a)) += cmap(dT).transpose();
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  axpy(out, b.value());
  return a.graph().record("add", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& d) {
    if (g.requires_grad(a)) axpy(g.grad_ref(a), d);
    if (g.requires_grad(b)) axpy(g.grad_ref(b), d);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  axpy(out, b.value(), -1.0);
  return a.graph().record("sub", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& d) {
    if (g.requires_grad(a)) axpy(g.grad_ref(a), d);
    if (g.requires_grad(b)) axpy(g.grad_ref(b), d, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto y = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= y[i];
  return a.graph().record("mul", std::move(out), {a, b}, [a, b](Graph& g, const Tensor& d) {
    auto dd = d.data();
    if (g.requires_grad(a)) {
      auto ga = g.grad_ref(a).data();
      auto vb = g.value(b).data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dd[i] * vb[i];
    }
    if (g.requires_grad(b)) {
      auto gb = g.grad_ref(b).data();
      auto va = g.value(a).data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += dd[i] * va[i];
    }
  });
}

Var add_row(Var a, Var row) {
  const Tensor& A = a.value();
  require_rank2(A, "add_row");
  const Tensor& R = row.value();
  if (R.numel() != A.cols())
    throw ShapeError("add_row: row " + shape_string(R.shape()) + " does not match " +
                     shape_string(A.shape()));
  Tensor out = A;
  const std::size_t n = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) += R[c];
  return a.graph().record("add_row", std::move(out), {a, row}, [a, row, n](Graph& g, const Tensor& d) {
    if (g.requires_grad(a)) axpy(g.grad_ref(a), d);
    if (g.requires_grad(row)) {
      auto gr = g.grad_ref(row).data();
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) gr[c] += d.at(r, c);
    }
  });
}

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double mul, double add) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = mul * v + add;
  return a.graph().record("affine", std::move(out), {a}, [a, mul](Graph& g, const Tensor& d) {
    axpy(g.grad_ref(a), d, mul);
  });
}

Var scale_by(Var a, Var s) {
  if (s.value().numel() != 1) throw ShapeError("scale_by: factor must be a single element");
  const double k = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.storage()) v *= k;
  return a.graph().record("scale_by", std::move(out), {a, s}, [a, s](Graph& g, const Tensor& d) {
    const double k = g.value(s)[0];
    if (g.requires_grad(a)) axpy(g.grad_ref(a), d, k);
    if (g.requires_grad(s)) {
      double acc = 0.0;
      auto dd = d.data();
      auto va = g.value(a).data();
      for (std::size_t i = 0; i < dd.size(); ++i) acc += dd[i] * va[i];
      g.grad_ref(s)[0] += acc;
    }
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return a.graph().record("relu", std::move(out), {a}, [a](Graph& g, const Tensor& d) {
    auto ga = g.grad_ref(a).data();
    auto va = g.value(a).data();
    auto dd = d.data();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (va[i] > 0.0) ga[i] += dd[i];
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.storage()) {
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    v = 0.5 * v * (1.0 + t);
  }
  return a.graph().record("gelu", std::move(out), {a}, [a](Graph& g, const Tensor& d) {
    auto ga = g.grad_ref(a).data();
    auto va = g.value(a).data();
    auto dd = d.data();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double x = va[i];
      const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      ga[i] += dd[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = 1.0 / (1.0 + std::exp(-v));
  auto y = std::make_shared<Tensor>(out);
  return a.graph().record("sigmoid", std::move(out), {a}, [a, y](Graph& g, const Tensor& d) {
    auto ga = g.grad_ref(a).data();
    auto vy = y->data();
    auto dd = d.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dd[i] * vy[i] * (1.0 - vy[i]);
  });
}

Var softmax_rows(Var x) {
  const Tensor& X = x.value();
  require_rank2(X, "softmax_rows");
  Tensor Y = X;
  const std::size_t n = X.cols();
  for (std::size_t r = 0; r < X.rows(); ++r) {
    auto row = Y.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (double& v : row) v /= z;
  }
  auto holder = std::make_shared<Tensor>(Y);
  return x.graph().record("softmax_rows", std::move(Y), {x}, [x, holder, n](Graph& g, const Tensor& d) {
    Tensor& gx = g.grad_ref(x);
    const Tensor& y = *holder;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += d.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < n; ++c) gx.at(r, c) += y.at(r, c) * (d.at(r, c) - dot);
    }
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  const Tensor& X = x.value();
  require_rank2(X, "layer_norm_rows");
  const std::size_t rows = X.rows(), n = X.cols();
  if (gain.value().numel() != n || bias.value().numel() != n)
    throw ShapeError("layer_norm_rows: gain/bias width must be " + std::to_string(n));
  auto xhat = std::make_shared<Tensor>(X.shape());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor Y(X.shape());
  const auto& G = gain.value();
  const auto& B = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += X.at(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (X.at(r, c) - mu) * (X.at(r, c) - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (X.at(r, c) - mu) * rs;
      xhat->at(r, c) = h;
      Y.at(r, c) = h * G[c] + B[c];
    }
  }
  return x.graph().record(
      "layer_norm_rows", std::move(Y), {x, gain, bias},
      [x, gain, bias, xhat, rstd, rows, n](Graph& g, const Tensor& d) {
        const auto& G = g.value(gain);
        if (g.requires_grad(gain) || g.requires_grad(bias)) {
          Tensor* gg = g.requires_grad(gain) ? &g.grad_ref(gain) : nullptr;
          Tensor* gb = g.requires_grad(bias) ? &g.grad_ref(bias) : nullptr;
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < n; ++c) {
              if (gg) (*gg)[c] += d.at(r, c) * xhat->at(r, c);
              if (gb) (*gb)[c] += d.at(r, c);
            }
        }
        if (!g.requires_grad(x)) return;
        Tensor& gx = g.grad_ref(x);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double dh = d.at(r, c) * G[c];
            s1 += dh;
            s2 += dh * xhat->at(r, c);
          }
          for (std::size_t c = 0; c < n; ++c) {
            const double dh = d.at(r, c) * G[c];
            gx.at(r, c) += (*rstd)[r] * (dh - inv_n * s1 - xhat->at(r, c) * inv_n * s2);
          }
        }
      });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& L = logits.value();
  require_rank2(L, "cross_entropy");
  const std::size_t rows = L.rows(), classes = L.cols();
  if (targets.size() != rows)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  auto probs = std::make_shared<Tensor>(L.shape());
  auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= classes)
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(classes) + ")");
    auto row = L.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(row[c] - mx);
      probs->at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < classes; ++c) probs->at(r, c) /= z;
    total += (mx + std::log(z)) - row[static_cast<std::size_t>(t)];
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  return logits.graph().record(
      "cross_entropy", Tensor::scalar(total * inv_rows), {logits},
      [logits, probs, tgt, inv_rows](Graph& g, const Tensor& d) {
        Tensor& gl = g.grad_ref(logits);
        const double k = d[0] * inv_rows;
        for (std::size_t r = 0; r < probs->rows(); ++r)
          for (std::size_t c = 0; c < probs->cols(); ++c) {
            const double onehot = static_cast<int>(c) == (*tgt)[r] ? 1.0 : 0.0;
            gl.at(r, c) += k * (probs->at(r, c) - onehot);
          }
      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record("sum", Tensor::scalar(s), {a}, [a](Graph& g, const Tensor& d) {
    for (double& v : g.grad_ref(a).storage()) v += d[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  const Tensor& A = a.value();
  require_rank2(A, "gather_rows");
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t cols = A.cols();
  Tensor out({indices.size(), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= A.rows())
      throw IndexError("gather_rows: row " + std::to_string(indices[i]) + " outside " +
                       shape_string(A.shape()));
    std::copy_n(A.row(indices[i]).begin(), cols, out.row(i).begin());
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  return a.graph().record("gather_rows", std::move(out), {a}, [a, idx, cols](Graph& g, const Tensor& d) {
    Tensor& ga = g.grad_ref(a);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      auto dst = ga.row((*idx)[i]);
      auto src = d.row(i);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row counts differ");
    total += p.value().cols();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(P.row(r).begin(), P.cols(), out.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    off += P.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().record("concat_cols", std::move(out), parts, [inputs](Graph& g, const Tensor& d) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t w = g.value(p).cols();
      if (g.requires_grad(p)) {
        Tensor& gp = g.grad_ref(p);
        for (std::size_t r = 0; r < d.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp.at(r, c) += d.at(r, off + c);
      }
      off += w;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& A = a.value();
  require_rank2(A, "slice_cols");
  if (count == 0 || begin + count > A.cols())
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_string(A.shape()));
  Tensor out({A.rows(), count});
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = A.at(r, begin + c);
  return a.graph().record("slice_cols", std::move(out), {a}, [a, begin, count](Graph& g, const Tensor& d) {
    Tensor& ga = g.grad_ref(a);
    for (std::size_t r = 0; r < d.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga.at(r, begin + c) += d.at(r, c);
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", std::move(out), {a}, [a](Graph& g, const Tensor& d) {
    auto ga = g.grad_ref(a).data();
    auto dd = d.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += dd[i];
  });
}

Var im2col3d(Var x, const Grid3& grid, int stride) {
  const Tensor& X = x.value();
  require_rank2(X, "im2col3d");
  if (X.rows() != grid.numel())
    throw ShapeError("im2col3d: " + shape_string(X.shape()) + " rows do not match grid " + grid.str());
  if (stride != 1 && stride != 2) throw ContractError("im2col3d: stride must be 1 or 2");
  if (stride == 2 && !grid.all_even()) throw ShapeError("im2col3d: stride 2 needs even extents");
  const Grid3 out_grid = stride == 1 ? grid : grid.half();
  const std::size_t C = X.cols();
  const std::size_t n_out = out_grid.numel();
  // src[o * 27 + tap] = input row or -1 for zero padding.
  auto src = std::make_shared<std::vector<std::int64_t>>(n_out * 27);
  const auto s = static_cast<std::int64_t>(stride);
  for (std::size_t o = 0; o < n_out; ++o) {
    const Voxel ov = out_grid.voxel(o);
    for (int kz = 0; kz < 3; ++kz)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const Voxel iv{ov.x * s + kx - 1, ov.y * s + ky - 1, ov.z * s + kz - 1};
          const int tap = kx + 3 * (ky + 3 * kz);
          (*src)[o * 27 + static_cast<std::size_t>(tap)] =
              grid.contains(iv) ? static_cast<std::int64_t>(grid.index(iv)) : -1;
        }
  }
  Tensor out({n_out, 27 * C});
  for (std::size_t o = 0; o < n_out; ++o) {
    double* dst = out.row(o).data();
    for (std::size_t tap = 0; tap < 27; ++tap) {
      const std::int64_t i = (*src)[o * 27 + tap];
      if (i >= 0) std::copy_n(X.row(static_cast<std::size_t>(i)).begin(), C, dst + tap * C);
    }
  }
  return x.graph().record("im2col3d", std::move(out), {x}, [x, src, C](Graph& g, const Tensor& d) {
    Tensor& gx = g.grad_ref(x);
    const std::size_t n_out = d.rows();
    for (std::size_t o = 0; o < n_out; ++o) {
      const double* row = d.row(o).data();
      for (std::size_t tap = 0; tap < 27; ++tap) {
        const std::int64_t i = (*src)[o * 27 + tap];
        if (i < 0) continue;
        double* dst = gx.row(static_cast<std::size_t>(i)).data();
        for (std::size_t c = 0; c < C; ++c) dst[c] += row[tap * C + c];
      }
    }
  });
}

}  // namespace ad

}  // namespace tis
