#include "stsparse/st_sparse.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

namespace stsparse {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_k(int k, Index d) {
  if (k < 1 || k > d)
    throw ContractError("topk: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(d) + "]");
}

// Marks the k winners of one row; `order` is scratch space of length d.
template <typename Row>
void select_row(const Row& row, int k, std::vector<Index>& order,
                std::vector<char>& keep) {
  const Index d = static_cast<Index>(order.size());
  std::iota(order.begin(), order.end(), Index{0});
  auto before = [&row](Index a, Index b) {
    return row(a) > row(b) || (row(a) == row(b) && a < b);
  };
  if (k < d) std::nth_element(order.begin(), order.begin() + k, order.end(), before);
  std::fill(keep.begin(), keep.end(), 0);
  for (int i = 0; i < k; ++i) keep[static_cast<std::size_t>(order[i])] = 1;
}

}  // namespace

int SparseConfig::k() const {
  if (k_override) return *k_override;
  // The tiny offset keeps products such as 0.29 * 100 from flooring to 28.
  return static_cast<int>(std::floor(alpha * static_cast<double>(d_h) + 1e-9));
}

void SparseConfig::validate() const {
  if (d_h < 1) throw ContractError("d_h must be positive");
  if (!k_override && !(alpha > 0.0 && alpha < 1.0))
    throw ContractError("alpha must lie in (0, 1)");
  if (gamma < 0.0 || tau < 0.0)
    throw ContractError("gamma and tau must be non-negative");
  if (duty_decay && (*duty_decay < 0.0 || *duty_decay > 1.0))
    throw ContractError("duty decay must lie in [0, 1]");
  const int kk = k();
  if (kk < 1 || kk > d_h)
    throw ContractError("k=" + std::to_string(kk) + " outside [1, d_h=" +
                        std::to_string(d_h) + "]; increase alpha or d_h");
}

Vector topk(const Vector& h, int k) {
  check_k(k, h.size());
  std::vector<Index> order(static_cast<std::size_t>(h.size()));
  std::vector<char> keep(order.size());
  select_row(h, k, order, keep);
  Vector out = Vector::Zero(h.size());
  for (Index j = 0; j < h.size(); ++j)
    if (keep[static_cast<std::size_t>(j)]) out(j) = h(j);
  return out;
}

std::pair<Matrix, BoolMatrix> topk_rows(const Matrix& h, int k) {
  check_k(k, h.cols());
  const RowMajorMatrix rows = h;
  RowMajorMatrix out = RowMajorMatrix::Zero(h.rows(), h.cols());
  BoolMatrix kept = BoolMatrix::Constant(h.rows(), h.cols(), false);
  std::vector<Index> order(static_cast<std::size_t>(h.cols()));
  std::vector<char> keep(order.size());
  for (Index i = 0; i < h.rows(); ++i) {
    const auto row = rows.row(i);
    select_row(row, k, order, keep);
    for (int r = 0; r < k; ++r) {
      const Index j = order[static_cast<std::size_t>(r)];
      out(i, j) = row(j);
      kept(i, j) = true;
    }
  }
  return {Matrix(out), std::move(kept)};
}

Value topk_rows(const Value& h, int k, BoolMatrix* kept_out) {
  auto [out, kept] = topk_rows(h.data(), k);
  if (kept_out) *kept_out = kept;
  const Value parents[] = {h};
  return h.tape().record(std::move(out), parents,
                         [h, kept = std::move(kept)](Tape& tape, const Matrix& g) {
                           tape.accumulate(
                               h, kept.select(g, Matrix::Zero(g.rows(), g.cols())));
                         });
}

DutyState update_duty(const DutyState& state, const Matrix& activation,
                      double tau, std::optional<double> decay) {
  if (activation.cols() != state.s_hat.size())
    throw ContractError("update_duty: activation has " +
                        std::to_string(activation.cols()) + " columns, duty " +
                        "tracks " + std::to_string(state.s_hat.size()));
  if (tau < 0.0) throw ContractError("update_duty: tau must be non-negative");
  const Vector counts =
      (activation.array() != 0.0).cast<double>().colwise().sum().transpose();
  DutyState next;
  next.s_hat = (decay ? *decay : 1.0) * state.s_hat + tau * counts;
  next.counts = state.counts.size() == counts.size() ? Vector(state.counts + counts)
                                                     : counts;
  next.epoch = state.epoch + 1;
  return next;
}

AttentionMask attention_mask(const DutyState& state, double gamma) {
  if (gamma < 0.0) throw ContractError("attention_mask: gamma must be >= 0");
  return {(-gamma * state.s_hat.array()).exp().matrix()};
}

double topk_margin(const Matrix& pre_activation, int k) {
  check_k(k, pre_activation.cols());
  double margin = std::numeric_limits<double>::infinity();
  if (k == pre_activation.cols()) return margin;
  std::vector<double> row(static_cast<std::size_t>(pre_activation.cols()));
  for (Index i = 0; i < pre_activation.rows(); ++i) {
    for (Index j = 0; j < pre_activation.cols(); ++j)
      row[static_cast<std::size_t>(j)] = pre_activation(i, j);
    std::sort(row.begin(), row.end(), std::greater<>());
    margin = std::min(margin, row[static_cast<std::size_t>(k - 1)] - row[static_cast<std::size_t>(k)]);
  }
  return margin;
}

double activation_ratio(const Matrix& s) {
  if (s.size() == 0) return 0.0;
  return static_cast<double>((s.array() != 0.0).count()) /
         static_cast<double>(s.size());
}

SparseLayerOutput st_layer_forward(const Propagation& a_norm, const Value& s_in,
                                   const Value& w, const AttentionMask* mask,
                                   int k, const BoolMatrix* input_pattern) {
  if (s_in.rows() != a_norm.size())
    throw ContractError("st_layer_forward: input has " +
                        std::to_string(s_in.rows()) + " rows for " +
                        std::to_string(a_norm.size()) + " nodes");
  if (s_in.cols() != w.rows())
    throw ContractError("st_layer_forward: input width " +
                        std::to_string(s_in.cols()) + " vs weight rows " +
                        std::to_string(w.rows()));
  if (mask && mask->b.size() != s_in.cols())
    throw ContractError("st_layer_forward: attention mask length differs from "
                        "input width");
  const Value masked = mask ? scale_columns(s_in, mask->b) : s_in;
  const Value projected = input_pattern ? pattern_matmul(masked, *input_pattern, w)
                                        : matmul(masked, w);
  const Value propagated = propagate(a_norm, projected);
  SparseLayerOutput out;
  out.activation = topk_rows(propagated, k, &out.kept);
  out.pre_activation = propagated;
  return out;
}

SparseLayerOutput st_layer_forward(const Propagation& a_norm, const Value& s_in,
                                   const Value& w, const AttentionMask* mask,
                                   const SparseConfig& cfg,
                                   const BoolMatrix* input_pattern) {
  cfg.validate();
  if (w.cols() != cfg.d_h)
    throw ContractError("st_layer_forward: weight width differs from d_h");
  return st_layer_forward(a_norm, s_in, w, mask, cfg.k(), input_pattern);
}

SparseLayerOutput st_input_layer_forward(const Propagation& a_norm,
                                         const Csr& features, const Value& w,
                                         int k) {
  if (features.rows() != a_norm.size())
    throw ContractError("st_input_layer_forward: feature rows differ from nodes");
  const Value projected = spmm(features, w);
  const Value propagated = propagate(a_norm, projected);
  SparseLayerOutput out;
  out.activation = topk_rows(propagated, k, &out.kept);
  out.pre_activation = propagated;
  return out;
}

}  // namespace stsparse
