#ifndef STSPARSE_DEFENSES_HPP
#define STSPARSE_DEFENSES_HPP

#include <string>
#include <vector>

#include "stsparse/models.hpp"

namespace stsparse {

enum class DefenseKind { none, jaccard, svd };

std::string to_string(DefenseKind kind);
DefenseKind parse_defense(const std::string& name);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  double jaccard_threshold = 0.01;
  int svd_rank = 10;

  /// Throws ContractError unless the threshold is >= 0 and, for the svd
  /// kind, 1 <= rank <= n.
  void validate(Index num_nodes) const;
};

/// Drops every edge whose endpoints have feature Jaccard similarity below
/// `threshold`, and every zero-similarity edge. Requires binary features (UnsupportedFeaturesError).
Graph jaccard_prune(const Graph& g, double threshold);

/// Best rank-r approximation of a symmetric matrix (keeps the r eigenpairs
/// of largest magnitude, i.e. the r largest singular values).
Matrix svd_truncate(const Matrix& symmetric, int rank);

struct LowRankGraph {
  /// Rank-r approximation of the binary adjacency.
  Matrix approximation;
  /// Clamped at zero, self-looped and symmetrically normalized.
  Propagation propagation;
};

LowRankGraph svd_lowrank(const Graph& g, int rank);

/// Runs the preprocessing once and returns the model input to train on.
ModelInput apply_defense(const Graph& g, const DefenseSpec& spec);

}  // namespace stsparse

#endif  // STSPARSE_DEFENSES_HPP
