#pragma once

// Reverse-mode automatic differentiation over a linear tape.
//
// A Tape owns every node created while evaluating one expression (one
// sample's forward pass). Nodes are appended in evaluation order, so the
// tape is topologically sorted by construction and backward() simply walks
// it in reverse. Gradients accumulate into each node's buffer in that fixed
// order, which keeps results bit-reproducible.
//
// A tape is not thread-safe. Independent tapes may live on different
// threads and may share read-only external storage bound through bind().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mga/tensor.hpp"

namespace mga::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const;

  std::span<const double> value() const;
  double item() const;
  /// Gradient after Tape::backward(); empty if the node does not require grad.
  std::span<const double> grad() const;

  Tensor to_tensor() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient flowing into the node (and the node's own value)
  /// and pushes it to inputs through Tape::grad_of().
  using BackwardFn = std::function<void(std::span<const double> out_grad,
                                        std::span<const double> out_value, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Leaf that reads `value` in place. The tensor must outlive the tape and
  /// stay unmodified while the tape is in use.
  Var bind(const Tensor& value, bool requires_grad = true);

  /// Appends an op node. `backward` is dropped when no input requires grad.
  Var record(Shape shape, std::vector<double> value, std::span<const Var> inputs,
             BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node in reverse
  /// insertion order. Gradients from a previous call are cleared first.
  void backward(const Var& loss);

  /// Mutable gradient buffer of a node, for use inside backward rules.
  /// Empty when the node does not require grad.
  std::span<double> grad_of(const Var& v);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Shape shape;
    std::vector<double> owned;
    const double* external = nullptr;
    std::size_t length = 0;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;

    const double* data() const { return external ? external : owned.data(); }
  };

  Var push(Node node);
  const Node& node(const Var& v) const { return nodes_[v.id_]; }

  std::vector<Node> nodes_;
};

// Primitive ops. All operands must live on the same tape. Rank-1 tensors
// are treated as a single row where a matrix is expected.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a length-n vector to every row of an m x n matrix.
Var add_row(const Var& a, const Var& row);
Var relu(const Var& a);

Var sum(const Var& a);
/// Column means over rows: [m x n] -> [1 x n]. Requires m >= 1.
Var mean_rows(const Var& a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
/// Row lookup: out[i] = table[ids[i]].
Var gather_rows(const Var& table, std::span<const std::size_t> ids);

Var softmax_rows(const Var& a);
/// Per row: gain * (x - mean) / sqrt(var + eps) + bias, biased variance.
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps);
/// -log softmax(logits)[answer]; logits may be any shape with C entries.
Var cross_entropy_logits(const Var& logits, std::size_t answer);

/// x * W + b for x [m x k], W [k x n], b [n].
Var linear(const Var& x, const Var& weight, const Var& bias);

}  // namespace mga::ad
