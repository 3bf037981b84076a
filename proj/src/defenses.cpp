#include "stsparse/defenses.hpp"

#include <algorithm>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace stsparse {

std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::none: return "none";
    case DefenseKind::jaccard: return "jaccard";
    case DefenseKind::svd: return "svd";
  }
  return "none";
}

DefenseKind parse_defense(const std::string& name) {
  if (name == "none") return DefenseKind::none;
  if (name == "jaccard") return DefenseKind::jaccard;
  if (name == "svd") return DefenseKind::svd;
  throw ConfigError("unknown defense '" + name + "'");
}

void DefenseSpec::validate(Index num_nodes) const {
  if (!(jaccard_threshold >= 0.0))
    throw ContractError("jaccard threshold must be >= 0");
  if (kind == DefenseKind::svd && (svd_rank < 1 || svd_rank > num_nodes))
    throw ContractError("svd rank " + std::to_string(svd_rank) +
                        " outside [1, " + std::to_string(num_nodes) + "]");
}

Graph jaccard_prune(const Graph& g, double threshold) {
  if (!is_binary(g.features()))
    throw UnsupportedFeaturesError("jaccard defense needs binary features");
  if (!(threshold >= 0.0)) throw ContractError("jaccard threshold must be >= 0");
  // Row-major sparse copy: each similarity costs the two supports only.
  const Csr x = Csr::from_dense(g.features());
  std::vector<std::pair<Index, Index>> kept;
  for (const auto& [i, j] : edge_list(g.adjacency())) {
    const auto a = x.row_cols(i);
    const auto b = x.row_cols(j);
    std::size_t p = 0, q = 0, inter = 0;
    while (p < a.size() && q < b.size()) {
      if (a[p] == b[q]) { ++inter; ++p; ++q; }
      else if (a[p] < b[q]) ++p;
      else ++q;
    }
    const std::size_t uni = a.size() + b.size() - inter;
    const double sim = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    // Zero-similarity edges go even at threshold 0.
    if (!(sim < threshold || sim == 0.0)) kept.emplace_back(i, j);
  }
  return g.with_adjacency(adjacency_from_edges(g.num_nodes(), kept));
}

Matrix svd_truncate(const Matrix& symmetric, int rank) {
  const Index n = symmetric.rows();
  if (symmetric.cols() != n) throw DimensionError("svd_truncate: matrix not square");
  if (rank < 1 || rank > n)
    throw ContractError("svd rank " + std::to_string(rank) + " outside [1, " +
                        std::to_string(n) + "]");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric);
  const Vector& lambda = eig.eigenvalues();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::abs(lambda(a)) > std::abs(lambda(b));
  });
  Matrix u(n, rank);
  Vector kept(rank);
  for (int r = 0; r < rank; ++r) {
    u.col(r) = eig.eigenvectors().col(order[static_cast<std::size_t>(r)]);
    kept(r) = lambda(order[static_cast<std::size_t>(r)]);
  }
  return u * kept.asDiagonal() * u.transpose();
}

LowRankGraph svd_lowrank(const Graph& g, int rank) {
  Matrix approx = svd_truncate(g.adjacency().to_dense(), rank);
  const Matrix clamped = approx.cwiseMax(0.0);
  return {std::move(approx), Propagation(normalize_dense_adjacency(clamped))};
}

ModelInput apply_defense(const Graph& g, const DefenseSpec& spec) {
  spec.validate(g.num_nodes());
  switch (spec.kind) {
    case DefenseKind::none: return ModelInput::from(g);
    case DefenseKind::jaccard: return ModelInput::from(jaccard_prune(g, spec.jaccard_threshold));
    case DefenseKind::svd: return ModelInput::from(g, svd_lowrank(g, spec.svd_rank).propagation);
  }
  return ModelInput::from(g);
}

}  // namespace stsparse
