#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tis/grid.hpp"
#include "tis/params.hpp"
#include "tis/tensor.hpp"

namespace tis {

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy; only valid while the
/// owning graph is alive and has not been reset.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for the backward sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient, readable with grad() after backward().
  Var input(Tensor value);
  /// Leaf bound to a parameter; backward() writes its gradient to p.grad.
  /// Registering the same parameter twice returns the same handle.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  /// Gradient of the last backward() loss w.r.t. v (zeros if unreachable).
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }

  /// Propagates d(loss)/d(node) through the tape. Every parameter registered
  /// on this graph has its grad overwritten (zero when unreachable). Throws
  /// ContractError on a second call without reset().
  void backward(Var loss);
  void reset();

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op plumbing. `fn` is stored only when some input requires a gradient.
  // The recorded value must be finite; NumericError names `op` otherwise.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  /// Mutable gradient accumulator for v, allocated on first use.
  Tensor& grad_ref(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool consumed_ = false;
};

/// Resolves parameter names to graph leaves: trainable leaves when bound to a
/// mutable store, constants when bound to a const one. Each name is entered
/// into the graph once.
class ParamBinder {
 public:
  ParamBinder(Graph& g, ParamStore& store) : graph_(g), mutable_(&store), store_(&store) {}
  ParamBinder(Graph& g, const ParamStore& store) : graph_(g), store_(&store) {}

  Var operator()(const std::string& name);
  Graph& graph() const { return graph_; }
  bool trainable() const { return mutable_ != nullptr; }

 private:
  Graph& graph_;
  ParamStore* mutable_ = nullptr;
  const ParamStore* store_;
  std::unordered_map<std::string, Var> bound_;
};

/// Differentiable primitives. Rank-2 tensors are [rows x cols]; a "row" argument
/// is [1 x cols]; a "scalar" argument is any single-element tensor.
namespace ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);
Var scale(Var a, double s);
/// a * s where s is a single-element variable.
Var scale_by(Var a, Var s);
/// mul * a + add, elementwise.
Var affine(Var a, double mul, double add);

Var relu(Var a);
/// tanh approximation of GELU.
Var gelu(Var a);
Var sigmoid(Var a);

/// Row-wise softmax with max subtraction.
Var softmax_rows(Var x);
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
/// x * w + b with w [in x out] and b [1 x out].
Var linear(Var x, Var w, Var b);

/// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(Var logits, std::span<const int> targets);

Var sum(Var a);
Var mean(Var a);

/// out[i] = a[indices[i]]; backward scatter-adds.
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var reshape(Var a, Shape shape);

/// 3x3x3 patch extraction for convolution. x is [grid.numel() x C] with rows in
/// grid order; output row o holds the zero-padded 27-neighbourhood of input
/// voxel stride*o, columns ordered (tap, channel) with tap = kx + 3(ky + 3kz).
/// stride must be 1 or 2; stride 2 requires even extents.
Var im2col3d(Var x, const Grid3& grid, int stride);

}  // namespace ad

}  // namespace tis
