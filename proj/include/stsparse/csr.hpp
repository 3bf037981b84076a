#ifndef STSPARSE_CSR_HPP
#define STSPARSE_CSR_HPP

#include <algorithm>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "stsparse/errors.hpp"

namespace stsparse {

using Index = Eigen::Index;

/// Compressed sparse row matrix in canonical form: column indices strictly
/// increasing within each row, no explicit duplicates.
template <typename Scalar>
class CsrMatrix {
 public:
  using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Triplet {
    Index row;
    Index col;
    Scalar value;
  };

  CsrMatrix() : row_ptr_(1, 0) {}

  CsrMatrix(Index rows, Index cols, std::vector<Index> row_ptr,
            std::vector<Index> col_idx, std::vector<Scalar> values)
      : rows_(rows),
        cols_(cols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    validate();
  }

  /// Builds a canonical matrix from unordered triplets. Duplicate coordinates
  /// are summed.
  static CsrMatrix from_triplets(Index rows, Index cols,
                                 std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
        throw DimensionError("triplet (" + std::to_string(t.row) + "," +
                             std::to_string(t.col) + ") outside " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const Triplet& a, const Triplet& b) {
                return std::tie(a.row, a.col) < std::tie(b.row, b.col);
              });
    std::vector<Index> row_ptr(static_cast<std::size_t>(rows) + 1, 0);
    std::vector<Index> col_idx;
    std::vector<Scalar> values;
    col_idx.reserve(triplets.size());
    values.reserve(triplets.size());
    for (std::size_t k = 0; k < triplets.size(); ++k) {
      const auto& t = triplets[k];
      if (k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
        values.back() += t.value;
        continue;
      }
      col_idx.push_back(t.col);
      values.push_back(t.value);
      ++row_ptr[static_cast<std::size_t>(t.row) + 1];
    }
    for (Index r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];
    return CsrMatrix(rows, cols, std::move(row_ptr), std::move(col_idx),
                     std::move(values));
  }

  /// Stores every entry of `dense` whose magnitude exceeds `drop_below`.
  template <typename Derived>
  static CsrMatrix from_dense(const Eigen::MatrixBase<Derived>& dense,
                              Scalar drop_below = Scalar(0)) {
    std::vector<Index> row_ptr(static_cast<std::size_t>(dense.rows()) + 1, 0);
    std::vector<Index> col_idx;
    std::vector<Scalar> values;
    for (Index r = 0; r < dense.rows(); ++r) {
      for (Index c = 0; c < dense.cols(); ++c) {
        const Scalar v = dense(r, c);
        if (std::abs(v) > drop_below) {
          col_idx.push_back(c);
          values.push_back(v);
        }
      }
      row_ptr[r + 1] = static_cast<Index>(col_idx.size());
    }
    return CsrMatrix(dense.rows(), dense.cols(), std::move(row_ptr),
                     std::move(col_idx), std::move(values));
  }

  static CsrMatrix identity(Index n) {
    std::vector<Index> row_ptr(static_cast<std::size_t>(n) + 1);
    std::vector<Index> col_idx(static_cast<std::size_t>(n));
    for (Index i = 0; i <= n; ++i) row_ptr[i] = i;
    for (Index i = 0; i < n; ++i) col_idx[i] = i;
    return CsrMatrix(n, n, std::move(row_ptr), std::move(col_idx),
                     std::vector<Scalar>(static_cast<std::size_t>(n), Scalar(1)));
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(col_idx_.size()); }

  std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
  std::span<const Index> col_idx() const noexcept { return col_idx_; }
  std::span<const Scalar> values() const noexcept { return values_; }

  std::span<const Index> row_cols(Index r) const noexcept {
    return std::span<const Index>(col_idx_).subspan(
        row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]);
  }
  std::span<const Scalar> row_values(Index r) const noexcept {
    return std::span<const Scalar>(values_).subspan(
        row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]);
  }

  /// Position of (r, c) in the value array, or -1 when not stored.
  Index find(Index r, Index c) const noexcept {
    const auto cols = row_cols(r);
    const auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return -1;
    return row_ptr_[r] + static_cast<Index>(it - cols.begin());
  }

  bool contains(Index r, Index c) const noexcept { return find(r, c) >= 0; }

  Scalar coeff(Index r, Index c) const noexcept {
    const Index k = find(r, c);
    return k < 0 ? Scalar(0) : values_[k];
  }

  DenseMatrix to_dense() const {
    DenseMatrix out = DenseMatrix::Zero(rows_, cols_);
    for (Index r = 0; r < rows_; ++r)
      for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        out(r, col_idx_[k]) = values_[k];
    return out;
  }

  CsrMatrix transpose() const {
    std::vector<Index> row_ptr(static_cast<std::size_t>(cols_) + 1, 0);
    for (Index c : col_idx_) ++row_ptr[c + 1];
    for (Index c = 0; c < cols_; ++c) row_ptr[c + 1] += row_ptr[c];
    std::vector<Index> next(row_ptr.begin(), row_ptr.end() - 1);
    std::vector<Index> col_idx(col_idx_.size());
    std::vector<Scalar> values(values_.size());
    for (Index r = 0; r < rows_; ++r) {
      for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        const Index dst = next[col_idx_[k]]++;
        col_idx[dst] = r;
        values[dst] = values_[k];
      }
    }
    return CsrMatrix(cols_, rows_, std::move(row_ptr), std::move(col_idx),
                     std::move(values));
  }

  /// Structural and value equality (bitwise on values).
  friend bool operator==(const CsrMatrix& a, const CsrMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
           a.row_ptr_ == b.row_ptr_ && a.col_idx_ == b.col_idx_ &&
           a.values_ == b.values_;
  }

 private:
  void validate() const {
    if (rows_ < 0 || cols_ < 0) throw DimensionError("negative CSR dimensions");
    if (row_ptr_.size() != static_cast<std::size_t>(rows_) + 1)
      throw DimensionError("CSR row_ptr length must be rows+1");
    if (row_ptr_.front() != 0) throw ContractError("CSR row_ptr[0] must be 0");
    if (col_idx_.size() != values_.size() ||
        row_ptr_.back() != static_cast<Index>(col_idx_.size()))
      throw ContractError("CSR row_ptr[rows] must equal the number of entries");
    for (Index r = 0; r < rows_; ++r) {
      if (row_ptr_[r + 1] < row_ptr_[r])
        throw ContractError("CSR row_ptr must be non-decreasing");
      for (Index k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        if (col_idx_[k] < 0 || col_idx_[k] >= cols_)
          throw DimensionError("CSR column index out of range");
        if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1])
          throw ContractError("CSR columns must be strictly increasing per row");
      }
    }
  }

  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_ptr_;
  std::vector<Index> col_idx_;
  std::vector<Scalar> values_;
};

using Csr = CsrMatrix<double>;

/// Read-only Eigen view over the CSR arrays.
template <typename Scalar>
Eigen::Map<const Eigen::SparseMatrix<Scalar, Eigen::RowMajor, Index>> as_eigen(
    const CsrMatrix<Scalar>& s) {
  return Eigen::Map<const Eigen::SparseMatrix<Scalar, Eigen::RowMajor, Index>>(
      s.rows(), s.cols(), s.nnz(), s.row_ptr().data(), s.col_idx().data(),
      s.values().data());
}

/// Sparse-dense product `s * dense`.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> spmm(
    const CsrMatrix<Scalar>& s, const Eigen::MatrixBase<Derived>& dense) {
  if (s.cols() != dense.rows())
    throw DimensionError("spmm: " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + " times " +
                         std::to_string(dense.rows()) + "x" +
                         std::to_string(dense.cols()));
  // Row-major operands keep every gathered row contiguous.
  using Rows = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Rows rows = dense;
  const Rows out = as_eigen(s) * rows;
  return out;
}

/// `s^T * dense` without materializing the transpose.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> spmm_transposed(
    const CsrMatrix<Scalar>& s, const Eigen::MatrixBase<Derived>& dense) {
  if (s.rows() != dense.rows())
    throw DimensionError("spmm_transposed: row count mismatch");
  using Rows = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Rows rows = dense;
  const Rows out = as_eigen(s).transpose() * rows;
  return out;
}

}  // namespace stsparse

#endif  // STSPARSE_CSR_HPP
