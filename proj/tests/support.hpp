// Generators and independent oracles shared by the unit tests. Oracles are
// written against dense matrices with plain loops so they share no code
// with the library paths they check.
#ifndef STSPARSE_TESTS_SUPPORT_HPP
#define STSPARSE_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "stsparse/graph.hpp"
#include "stsparse/tape.hpp"

namespace testing {

using stsparse::Csr;
using stsparse::Graph;
using stsparse::Index;
using stsparse::Matrix;
using stsparse::NodeMask;
using stsparse::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Matrix random_binary(Index rows, Index cols, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = b(rng) ? 1.0 : 0.0;
  return m;
}

inline std::vector<std::pair<Index, Index>> random_edges(Index n, double p,
                                                         std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (b(rng)) edges.emplace_back(i, j);
  return edges;
}

/// Random graph with binary features, labels in [0, classes) and a split
/// that puts every third node in train, then val, then test.
inline Graph random_graph(Index n, Index d, int classes, double p, std::mt19937_64& rng) {
  const auto edges = random_edges(n, p, rng);
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::uniform_int_distribution<int> cls(0, classes - 1);
  for (auto& l : labels) l = cls(rng);
  labels[0] = 0;
  labels[1] = classes - 1;
  NodeMask train = NodeMask::Constant(n, false), val = train, test = train;
  for (Index i = 0; i < n; ++i) (i % 3 == 0 ? train : i % 3 == 1 ? val : test)(i) = true;
  return Graph(stsparse::adjacency_from_edges(n, edges), random_binary(n, d, 0.4, rng),
               std::move(labels), classes, train, val, test);
}

/// Planted partition: label i % classes, edges with probability p_in inside
/// a class and p_out across, features biased towards a class-specific block.
inline Graph planted_graph(Index n, int classes, double p_in, double p_out,
                           std::mt19937_64& rng) {
  const Index block = 4;
  const Index d = block * classes;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % classes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (u(rng) < (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? p_in : p_out))
        edges.emplace_back(i, j);
  Matrix x = Matrix::Zero(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index f = 0; f < d; ++f) {
      const bool own = f / block == labels[static_cast<std::size_t>(i)];
      x(i, f) = u(rng) < (own ? 0.5 : 0.15) ? 1.0 : 0.0;
    }
  NodeMask train = NodeMask::Constant(n, false), val = train, test = train;
  for (Index i = 0; i < n; ++i) (i < 2 * classes ? train : i % 2 == 0 ? val : test)(i) = true;
  return Graph(stsparse::adjacency_from_edges(n, edges), std::move(x), std::move(labels), classes,
               train, val, test);
}

/// D^-1/2 (A + I) D^-1/2 by direct loops.
inline Matrix normalized_oracle(const Matrix& a) {
  const Index n = a.rows();
  Matrix t = a;
  for (Index i = 0; i < n; ++i) t(i, i) += 1.0;
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) deg[static_cast<std::size_t>(i)] += t(i, j);
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      out(i, j) = t(i, j) / std::sqrt(deg[static_cast<std::size_t>(i)] *
                                      deg[static_cast<std::size_t>(j)]);
  return out;
}

/// Keeps the k largest entries of `v` (lowest index first among equals) by
/// a full stable sort.
inline Vector topk_oracle(const Vector& v, int k) {
  std::vector<Index> idx(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return v(a) > v(b); });
  Vector out = Vector::Zero(v.size());
  for (int r = 0; r < k; ++r) out(idx[static_cast<std::size_t>(r)]) = v(idx[static_cast<std::size_t>(r)]);
  return out;
}

/// Central differences of a scalar function of one matrix.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_relative_error(const Matrix& a, const Matrix& n, double floor = 1e-6) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a.data()[i]), std::abs(n.data()[i]), floor});
    worst = std::max(worst, std::abs(a.data()[i] - n.data()[i]) / denom);
  }
  return worst;
}

/// Mean train-mask cross-entropy from dense logits.
inline double cross_entropy_oracle(const Matrix& logits, const std::vector<int>& labels,
                                   const NodeMask& mask) {
  double total = 0.0;
  int count = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask(i)) continue;
    double m = logits(i, 0);
    for (Index c = 1; c < logits.cols(); ++c) m = std::max(m, logits(i, c));
    double z = 0.0;
    for (Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c) - m);
    total += m + std::log(z) - logits(i, labels[static_cast<std::size_t>(i)]);
    ++count;
  }
  return total / count;
}

}  // namespace testing

#endif  // STSPARSE_TESTS_SUPPORT_HPP
