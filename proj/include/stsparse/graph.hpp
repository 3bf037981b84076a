#ifndef STSPARSE_GRAPH_HPP
#define STSPARSE_GRAPH_HPP

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "stsparse/csr.hpp"

namespace stsparse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using NodeMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Immutable node-classification instance. The adjacency is symmetric,
/// binary and loop-free; self-loops only appear after normalization.
class Graph {
 public:
  Graph(Csr adjacency, Matrix features, std::vector<int> labels,
        int num_classes, NodeMask train_mask, NodeMask val_mask,
        NodeMask test_mask);

  Index num_nodes() const noexcept { return adjacency_.rows(); }
  Index feature_dim() const noexcept { return features_.cols(); }
  int num_classes() const noexcept { return num_classes_; }
  /// Undirected edge count (each edge stored twice in the adjacency).
  Index num_edges() const noexcept { return adjacency_.nnz() / 2; }

  const Csr& adjacency() const noexcept { return adjacency_; }
  const Matrix& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const NodeMask& train_mask() const noexcept { return train_mask_; }
  const NodeMask& val_mask() const noexcept { return val_mask_; }
  const NodeMask& test_mask() const noexcept { return test_mask_; }

  bool has_edge(Index i, Index j) const noexcept {
    return adjacency_.contains(i, j);
  }

  /// Same nodes, features, labels and masks over a different edge set.
  Graph with_adjacency(Csr adjacency) const;

  friend bool operator==(const Graph& a, const Graph& b);

 private:
  Csr adjacency_;
  Matrix features_;
  std::vector<int> labels_;
  int num_classes_;
  NodeMask train_mask_;
  NodeMask val_mask_;
  NodeMask test_mask_;
};

/// Builds a symmetric binary adjacency from undirected pairs. Duplicates and
/// reversed duplicates collapse to one edge; self-loops are rejected.
Csr adjacency_from_edges(Index n, std::span<const std::pair<Index, Index>> edges);

/// Undirected edge list (i < j) in row-major order.
std::vector<std::pair<Index, Index>> edge_list(const Csr& adjacency);

/// D^{-1/2} (A + I) D^{-1/2} with D the degrees of A + I.
Csr normalize_adjacency(const Csr& adjacency);

/// Dense counterpart used by the low-rank defense: self-loops are added to
/// `weights` and the result is symmetrically normalized.
Matrix normalize_dense_adjacency(const Matrix& weights);

enum class FlipAction : std::uint8_t { add, remove };

struct EdgeFlip {
  Index i;
  Index j;
  FlipAction action;

  friend bool operator==(const EdgeFlip&, const EdgeFlip&) = default;
};

/// Applies flips in order; each flip is checked against the state left by
/// the preceding ones.
Graph apply_flips(const Graph& g, std::span<const EdgeFlip> flips);

/// Inverse flips in reverse order; applying them after `flips` restores the
/// original graph.
std::vector<EdgeFlip> invert_flips(std::span<const EdgeFlip> flips);

/// |x_i ∩ x_j| / |x_i ∪ x_j| over binary vectors; 0 when both are empty.
template <typename DerivedA, typename DerivedB>
double jaccard(const Eigen::MatrixBase<DerivedA>& x_i,
               const Eigen::MatrixBase<DerivedB>& x_j) {
  if (x_i.size() != x_j.size())
    throw DimensionError("jaccard: vectors of length " +
                         std::to_string(x_i.size()) + " and " +
                         std::to_string(x_j.size()));
  Index inter = 0;
  Index uni = 0;
  for (Index k = 0; k < x_i.size(); ++k) {
    const bool a = x_i(k) != 0;
    const bool b = x_j(k) != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Whether every entry of `features` is 0 or 1.
bool is_binary(const Matrix& features);

/// Operator applied in each graph convolution: either a sparse normalized
/// adjacency or a dense one (low-rank defense).
class Propagation {
 public:
  explicit Propagation(Csr sparse) : op_(std::move(sparse)) {}
  explicit Propagation(Matrix dense) : op_(std::move(dense)) {}

  /// Normalized adjacency of `g`.
  static Propagation of(const Graph& g) {
    return Propagation(normalize_adjacency(g.adjacency()));
  }

  Index size() const noexcept;
  bool is_dense() const noexcept { return std::holds_alternative<Matrix>(op_); }
  const Csr& sparse() const { return std::get<Csr>(op_); }
  const Matrix& dense() const { return std::get<Matrix>(op_); }

  Matrix apply(const Matrix& x) const;
  Matrix apply_transposed(const Matrix& x) const;

 private:
  std::variant<Csr, Matrix> op_;
};

}  // namespace stsparse

#endif  // STSPARSE_GRAPH_HPP
