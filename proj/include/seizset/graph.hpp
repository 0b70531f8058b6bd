#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "seizset/tensor.hpp"

namespace seizset {

class Graph;

/// Handle to a value recorded in a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr && id_ >= 0; }

  const Tensor& value() const;
  const Tensor& grad() const;

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Define-by-run tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() walks it once in reverse. A graph is
/// single-writer and is rebuilt for every forward pass.
class Graph {
 public:
  /// Propagates the gradient stored on node `self` into its inputs.
  using BackwardFn = std::function<void(Graph&, int self)>;

  /// With `record_gradients` false the graph only evaluates values, which is
  /// what inference uses.
  explicit Graph(bool record_gradients = true) : recording_(record_gradients) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an operation result. `backward` may be empty for ops that never
  /// need gradients.
  Var record(Tensor value, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(int id) const;
  const Tensor& value(Var v) const { return value(v.id()); }
  bool requires_grad(int id) const;
  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulated on a node; zero-filled for nodes the output does not
  /// depend on. Throws StateError before backward() has run.
  const Tensor& grad(Var v) const;

  /// Mutable gradient buffer, allocated on first use. For BackwardFn bodies.
  Tensor& grad_buffer(int id);
  /// True when some gradient has been written to node `id`.
  bool has_grad(int id) const;

  /// Runs the reverse sweep from `output` seeded with `seed`.
  void backward(Var output, const Tensor& seed);
  /// Scalar convenience: seed = 1.
  void backward(Var scalar_output);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Node& node(int id) const;

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All inputs must live in the same graph.

/// a[m x k] * b[k x n].
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// x[m x n] + bias[1 x n] broadcast over rows.
Var add_row(Var x, Var bias);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var sigmoid(Var a);
/// Row-wise softmax with max subtraction.
Var softmax_rows(Var x);
/// Row-wise layer normalization over the last axis followed by gain/bias.
Var layer_norm(Var x, Var gain, Var bias, double epsilon = 1e-5);
/// Sum of all elements as a 1x1 tensor.
Var sum(Var a);
/// Mean of all elements as a 1x1 tensor.
Var mean(Var a);
/// Horizontal concatenation of rank-2 tensors with equal row counts.
Var concat_cols(std::span<const Var> parts);
/// Repeats a single-row tensor `n` times.
Var tile_rows(Var row, std::size_t n);

/// Weighted mean binary cross-entropy evaluated from logits:
/// sum_i w_i * (softplus(z_i) - y_i z_i) / m.
Var bce_with_logits(Var logits, std::span<const double> labels, std::span<const double> weights);

struct AttentionOutput {
  Var values;       ///< (sets * query_set) x d_v
  Tensor weights;   ///< (sets * query_set) x key_set, averaged over heads
};

/// Multi-head scaled dot-product attention applied independently to a batch
/// of sets.
///
/// Rows of `queries` are grouped in blocks of `query_set`, rows of `keys` and
/// `values` in blocks of `key_set`; block s of the queries only attends to
/// block s of the keys. Columns are split evenly across `heads`, and scores
/// are scaled by 1/sqrt(d_k / heads).
AttentionOutput set_attention(Var queries, Var keys, Var values, std::size_t heads, std::size_t query_set,
                              std::size_t key_set);

// ---------------------------------------------------------------------------

/// Central-difference gradient check.
///
/// `f` builds a scalar from the given leaves. Every coordinate of every input
/// (or `max_coords` sampled coordinates per input, when nonzero) is perturbed
/// by +-step, and the worst |analytic - numeric| / max(|analytic|, |numeric|,
/// 1e-8) is returned.
using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;
double finite_diff_check(const ScalarFn& f, std::vector<Tensor> inputs, double step,
                         std::size_t max_coords = 0, std::uint64_t seed = 0);

/// Single-input convenience overload.
double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double step);

}  // namespace seizset
