#include "stsparse/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace stsparse {

namespace {

void check_mask(const NodeMask& mask, Index n, const char* name) {
  if (mask.size() != n)
    throw DimensionError(std::string(name) + " has length " +
                         std::to_string(mask.size()) + ", expected " +
                         std::to_string(n));
}

}  // namespace

Graph::Graph(Csr adjacency, Matrix features, std::vector<int> labels,
             int num_classes, NodeMask train_mask, NodeMask val_mask,
             NodeMask test_mask)
    : adjacency_(std::move(adjacency)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      train_mask_(std::move(train_mask)),
      val_mask_(std::move(val_mask)),
      test_mask_(std::move(test_mask)) {
  const Index n = adjacency_.rows();
  if (adjacency_.cols() != n) throw DimensionError("adjacency must be square");
  if (features_.rows() != n)
    throw DimensionError("feature matrix has " +
                         std::to_string(features_.rows()) + " rows for " +
                         std::to_string(n) + " nodes");
  if (static_cast<Index>(labels_.size()) != n)
    throw DimensionError("label vector length differs from node count");
  if (num_classes_ < 1) throw ContractError("graph needs at least one class");
  for (int c : labels_)
    if (c < 0 || c >= num_classes_)
      throw ContractError("label " + std::to_string(c) + " outside [0, " +
                          std::to_string(num_classes_) + ")");
  check_mask(train_mask_, n, "train_mask");
  check_mask(val_mask_, n, "val_mask");
  check_mask(test_mask_, n, "test_mask");
  if ((train_mask_ && val_mask_).any() || (train_mask_ && test_mask_).any() ||
      (val_mask_ && test_mask_).any())
    throw ContractError("train/val/test masks must be disjoint");
  for (Index r = 0; r < n; ++r) {
    const auto cols = adjacency_.row_cols(r);
    const auto vals = adjacency_.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] == r) throw ContractError("adjacency stores a self-loop");
      if (vals[k] != 1.0) throw ContractError("adjacency must be binary");
      if (!adjacency_.contains(cols[k], r))
        throw ContractError("adjacency must be symmetric");
    }
  }
}

Graph Graph::with_adjacency(Csr adjacency) const {
  return Graph(std::move(adjacency), features_, labels_, num_classes_,
               train_mask_, val_mask_, test_mask_);
}

bool operator==(const Graph& a, const Graph& b) {
  return a.adjacency_ == b.adjacency_ &&
         a.features_.rows() == b.features_.rows() &&
         a.features_.cols() == b.features_.cols() &&
         a.features_ == b.features_ && a.labels_ == b.labels_ &&
         a.num_classes_ == b.num_classes_ &&
         (a.train_mask_ == b.train_mask_).all() &&
         (a.val_mask_ == b.val_mask_).all() &&
         (a.test_mask_ == b.test_mask_).all();
}

Csr adjacency_from_edges(Index n,
                         std::span<const std::pair<Index, Index>> edges) {
  std::vector<Csr::Triplet> triplets;
  triplets.reserve(edges.size() * 2);
  for (const auto& [i, j] : edges) {
    if (i == j)
      throw ContractError("self-loop on node " + std::to_string(i));
    triplets.push_back({i, j, 1.0});
    triplets.push_back({j, i, 1.0});
  }
  Csr summed = Csr::from_triplets(n, n, std::move(triplets));
  std::vector<double> ones(summed.values().size(), 1.0);
  return Csr(n, n, {summed.row_ptr().begin(), summed.row_ptr().end()},
             {summed.col_idx().begin(), summed.col_idx().end()},
             std::move(ones));
}

std::vector<std::pair<Index, Index>> edge_list(const Csr& adjacency) {
  std::vector<std::pair<Index, Index>> out;
  out.reserve(static_cast<std::size_t>(adjacency.nnz() / 2));
  for (Index r = 0; r < adjacency.rows(); ++r)
    for (Index c : adjacency.row_cols(r))
      if (c > r) out.emplace_back(r, c);
  return out;
}

Csr normalize_adjacency(const Csr& adjacency) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n)
    throw DimensionError("normalize_adjacency: adjacency is " +
                         std::to_string(n) + "x" +
                         std::to_string(adjacency.cols()));
  Vector degree = Vector::Ones(n);
  for (Index r = 0; r < n; ++r)
    for (double v : adjacency.row_values(r)) degree(r) += v;

  std::vector<Index> row_ptr(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Index> col_idx;
  std::vector<double> values;
  col_idx.reserve(static_cast<std::size_t>(adjacency.nnz() + n));
  values.reserve(static_cast<std::size_t>(adjacency.nnz() + n));
  for (Index r = 0; r < n; ++r) {
    bool diagonal_done = false;
    const auto cols = adjacency.row_cols(r);
    const auto vals = adjacency.row_values(r);
    auto emit = [&](Index c, double a) {
      col_idx.push_back(c);
      values.push_back(a / std::sqrt(degree(r) * degree(c)));
    };
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (!diagonal_done && cols[k] >= r) {
        if (cols[k] == r) {
          emit(r, vals[k] + 1.0);
          diagonal_done = true;
          continue;
        }
        emit(r, 1.0);
        diagonal_done = true;
      }
      emit(cols[k], vals[k]);
    }
    if (!diagonal_done) emit(r, 1.0);
    row_ptr[r + 1] = static_cast<Index>(col_idx.size());
  }
  return Csr(n, n, std::move(row_ptr), std::move(col_idx), std::move(values));
}

Matrix normalize_dense_adjacency(const Matrix& weights) {
  if (weights.rows() != weights.cols())
    throw DimensionError("normalize_dense_adjacency: matrix is not square");
  Matrix with_loops = weights;
  with_loops.diagonal().array() += 1.0;
  const Vector degree = with_loops.rowwise().sum();
  if ((degree.array() <= 0.0).any())
    throw ContractError("normalize_dense_adjacency: non-positive degree");
  const Vector inv_sqrt = degree.array().rsqrt();
  return inv_sqrt.asDiagonal() * with_loops * inv_sqrt.asDiagonal();
}

Graph apply_flips(const Graph& g, std::span<const EdgeFlip> flips) {
  if (flips.empty()) return g;
  const Index n = g.num_nodes();
  std::set<std::pair<Index, Index>> edges;
  for (const auto& e : edge_list(g.adjacency())) edges.insert(e);
  for (const auto& f : flips) {
    if (f.i < 0 || f.j < 0 || f.i >= n || f.j >= n)
      throw DimensionError("flip node id out of range");
    if (f.i == f.j) throw InconsistentFlipError("flip on diagonal entry");
    const std::pair<Index, Index> key{std::min(f.i, f.j), std::max(f.i, f.j)};
    if (f.action == FlipAction::add) {
      if (!edges.insert(key).second)
        throw InconsistentFlipError("add of existing edge (" +
                                    std::to_string(key.first) + "," +
                                    std::to_string(key.second) + ")");
    } else if (edges.erase(key) == 0) {
      throw InconsistentFlipError("remove of missing edge (" +
                                  std::to_string(key.first) + "," +
                                  std::to_string(key.second) + ")");
    }
  }
  const std::vector<std::pair<Index, Index>> list(edges.begin(), edges.end());
  return g.with_adjacency(adjacency_from_edges(n, list));
}

std::vector<EdgeFlip> invert_flips(std::span<const EdgeFlip> flips) {
  std::vector<EdgeFlip> out;
  out.reserve(flips.size());
  for (auto it = flips.rbegin(); it != flips.rend(); ++it)
    out.push_back({it->i, it->j,
                   it->action == FlipAction::add ? FlipAction::remove
                                                 : FlipAction::add});
  return out;
}

bool is_binary(const Matrix& features) {
  return ((features.array() == 0.0) || (features.array() == 1.0)).all();
}

Index Propagation::size() const noexcept {
  return std::visit([](const auto& m) { return m.rows(); }, op_);
}

Matrix Propagation::apply(const Matrix& x) const {
  if (const auto* s = std::get_if<Csr>(&op_)) return spmm(*s, x);
  const Matrix& d = std::get<Matrix>(op_);
  if (d.cols() != x.rows()) throw DimensionError("propagation shape mismatch");
  return d * x;
}

Matrix Propagation::apply_transposed(const Matrix& x) const {
  if (const auto* s = std::get_if<Csr>(&op_)) return spmm_transposed(*s, x);
  const Matrix& d = std::get<Matrix>(op_);
  if (d.rows() != x.rows()) throw DimensionError("propagation shape mismatch");
  return d.transpose() * x;
}

}  // namespace stsparse
