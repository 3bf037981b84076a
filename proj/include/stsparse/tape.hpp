#ifndef STSPARSE_TAPE_HPP
#define STSPARSE_TAPE_HPP

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stsparse/graph.hpp"

namespace stsparse {

class Tape;

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Rng = std::mt19937_64;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Value {
 public:
  Value() = default;

  const Matrix& data() const;
  /// Gradient after Tape::backward; empty before the first backward.
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  Index rows() const { return data().rows(); }
  Index cols() const { return data().cols(); }

 private:
  friend class Tape;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of primitive applications. Nodes are stored in
/// insertion order, which is a topological order; backward walks it in
/// reverse.
class Tape {
 public:
  /// Receives the upstream gradient of the node and accumulates into its
  /// parents through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node (parameter when `requires_grad`, otherwise a constant).
  Value leaf(Matrix data, bool requires_grad = true);
  Value constant(Matrix data) { return leaf(std::move(data), false); }

  /// Records an intermediate result. It requires grad iff any parent does;
  /// `backward` is dropped otherwise.
  Value record(Matrix data, std::span<const Value> parents, BackwardFn backward);

  /// Adds `g` into the gradient of `v` (no-op when v does not require grad).
  void accumulate(const Value& v, const Matrix& g);
  void accumulate(std::size_t id, const Matrix& g);

  /// Seeds d(loss)/d(loss) = 1 and propagates in reverse insertion order.
  /// Leaf gradients accumulate across calls; call zero_grad between steps.
  void backward(const Value& loss);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Replaces the stored data of a leaf (optimizer updates).
  Matrix& mutable_leaf_data(const Value& v);

 private:
  friend class Value;
  struct Node {
    Matrix data;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = true;
    BackwardFn backward;
  };
  const Node& node(const Value& v) const;

  std::vector<Node> nodes_;
};

// Primitives. All throw DimensionError on incompatible shapes.

Value matmul(const Value& a, const Value& b);
/// Constant sparse matrix times a tape value; backward gives s^T * upstream.
/// `s` is held by reference and must outlive the backward pass.
Value spmm(const Csr& s, const Value& b);
/// Constant propagation operator (sparse or dense) applied on the left.
Value propagate(const Propagation& op, const Value& b);
/// `a * b` where only the entries of `a` selected by `pattern` are free
/// variables: the gradient of `a` is computed on the pattern and is zero
/// elsewhere. Used when `a` is structurally sparse (TopK output).
Value pattern_matmul(const Value& a, const BoolMatrix& pattern, const Value& b);
/// Elementwise product with a constant mask; no gradient reaches the mask.
Value hadamard(const Value& a, const Matrix& mask);
/// Multiplies column j by the constant factor b(j) (row-broadcast mask).
Value scale_columns(const Value& a, const Vector& b);
Value relu(const Value& a);
/// Inverted dropout: zeroes entries with probability p and scales survivors
/// by 1/(1-p) in training mode; identity otherwise.
Value dropout(const Value& a, double p, Rng& rng, bool training);
Value add(const Value& a, const Value& b);
Value add_constant(const Value& a, const Matrix& c);
Value scale(const Value& a, double factor);
/// Sum of all entries as a 1x1 value.
Value sum(const Value& a);
/// Mean over masked rows of -log softmax(logits)_label (1x1 value).
Value softmax_cross_entropy(const Value& logits, std::span<const int> labels,
                            const NodeMask& mask);
/// D^{-1/2}(W + I)D^{-1/2} of a dense square value, D the row sums of W + I.
Value normalize_dense(const Value& weights);

/// Row-wise softmax, stabilized by the row maximum.
Matrix softmax_rows(const Matrix& logits);

}  // namespace stsparse

#endif  // STSPARSE_TAPE_HPP
