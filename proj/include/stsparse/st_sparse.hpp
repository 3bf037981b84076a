#ifndef STSPARSE_ST_SPARSE_HPP
#define STSPARSE_ST_SPARSE_HPP

#include <optional>
#include <utility>

#include "stsparse/tape.hpp"

namespace stsparse {

/// Hyperparameters of the spatio-temporal sparse layers.
struct SparseConfig {
  int d_h = 1024;
  double alpha = 0.1;
  /// Steepness of the attention mask exp(-gamma * s_hat).
  double gamma = 1e-3;
  /// Weight of each epoch's column counts in s_hat.
  double tau = 1e-4;
  bool temporal_enabled = true;
  /// When set, s_hat <- rho * s_hat + tau * counts instead of pure
  /// accumulation.
  std::optional<double> duty_decay;
  /// Overrides floor(alpha * d_h); only for neutral configurations where the
  /// layer must keep every feature (k = d_h).
  std::optional<int> k_override;

  /// floor(alpha * d_h), or the override.
  int k() const;
  /// Throws ContractError unless 1 <= k <= d_h and the ratios are in range.
  void validate() const;
  /// gamma/tau actually used: zero when temporal sparsification is off.
  double effective_gamma() const { return temporal_enabled ? gamma : 0.0; }
  double effective_tau() const { return temporal_enabled ? tau : 0.0; }
};

/// Accumulated per-feature duty of one sparse layer. One vector shared by
/// all nodes.
struct DutyState {
  Vector s_hat;
  /// Raw cumulative nonzero count per feature, independent of tau.
  Vector counts;
  long epoch = 0;

  static DutyState zeros(int d_h) {
    return {Vector::Zero(d_h), Vector::Zero(d_h), 0};
  }
};

struct AttentionMask {
  /// b_j = exp(-gamma * s_hat_j), broadcast across node rows.
  Vector b;
};

/// Keeps the k largest entries of `h` (ties: lowest index first) and zeroes
/// the rest.
Vector topk(const Vector& h, int k);

/// Row-wise topk. Returns the sparsified matrix and the kept-entry mask.
std::pair<Matrix, BoolMatrix> topk_rows(const Matrix& h, int k);

/// Tape version: gradient flows unchanged through kept entries and is zero
/// through dropped ones. The mask is written to `kept` when given.
Value topk_rows(const Value& h, int k, BoolMatrix* kept = nullptr);

/// s_hat[j] += tau * nnz(column j of `activation`), with optional decay of the
/// previous value.
DutyState update_duty(const DutyState& state, const Matrix& activation,
                      double tau, std::optional<double> decay = std::nullopt);

AttentionMask attention_mask(const DutyState& state, double gamma);

/// Fraction of nonzero entries.
double activation_ratio(const Matrix& s);

struct SparseLayerOutput {
  Value activation;
  /// Entries kept by TopK; the free variables of the activation downstream.
  BoolMatrix kept;
  /// The propagated product before TopK.
  Value pre_activation;
};

/// Smallest gap, over rows, between the k-th and (k+1)-th largest entry.
/// TopK selections are stable under perturbations smaller than half of it.
/// Infinite when k equals the width.
double topk_margin(const Matrix& pre_activation, int k);

/// TopK(A_norm * (mask ⊙ S_in) * W, k). Pass `input_pattern` when S_in is
/// itself a TopK output so the product exploits its sparsity; pass no mask
/// for the raw feature input.
SparseLayerOutput st_layer_forward(const Propagation& a_norm, const Value& s_in,
                                   const Value& w, const AttentionMask* mask,
                                   int k, const BoolMatrix* input_pattern = nullptr);

SparseLayerOutput st_layer_forward(const Propagation& a_norm, const Value& s_in,
                                   const Value& w, const AttentionMask* mask,
                                   const SparseConfig& cfg,
                                   const BoolMatrix* input_pattern = nullptr);

/// First layer over raw (sparse) node features: TopK(A_norm * X * W, k).
/// `features` must outlive the backward pass.
SparseLayerOutput st_input_layer_forward(const Propagation& a_norm,
                                         const Csr& features, const Value& w,
                                         int k);

}  // namespace stsparse

#endif  // STSPARSE_ST_SPARSE_HPP
