#include "stsparse/tape.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace stsparse {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shapes " + shape(a) + " and " +
                         shape(b) + " differ");
}

}  // namespace

const Matrix& Value::data() const { return tape_->node(*this).data; }
const Matrix& Value::grad() const { return tape_->node(*this).grad; }
bool Value::requires_grad() const { return tape_->node(*this).requires_grad; }

const Tape::Node& Tape::node(const Value& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size())
    throw ContractError("value does not belong to this tape");
  return nodes_[v.id_];
}

Value Tape::leaf(Matrix data, bool requires_grad) {
  Node n;
  n.data = std::move(data);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

Value Tape::record(Matrix data, std::span<const Value> parents,
                   BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || node(p).requires_grad;
  Node n;
  n.data = std::move(data);
  n.requires_grad = needs;
  n.is_leaf = false;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

void Tape::accumulate(const Value& v, const Matrix& g) { accumulate(v.id_, g); }

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return;
  if (n.grad.rows() != n.data.rows() || n.grad.cols() != n.data.cols())
    n.grad = Matrix::Zero(n.data.rows(), n.data.cols());
  require_same_shape("accumulate", n.grad, g);
  n.grad += g;
}

void Tape::backward(const Value& loss) {
  const Node& l = node(loss);
  if (l.data.rows() != 1 || l.data.cols() != 1)
    throw ContractError("backward needs a scalar loss, got " + shape(l.data));
  for (auto& n : nodes_) {
    if (!n.requires_grad) continue;
    const bool sized =
        n.grad.rows() == n.data.rows() && n.grad.cols() == n.data.cols();
    if (!sized || !n.is_leaf) n.grad = Matrix::Zero(n.data.rows(), n.data.cols());
  }
  if (!l.requires_grad) return;
  nodes_[loss.id_].grad(0, 0) += 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, n.grad);
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_)
    if (n.requires_grad) n.grad = Matrix::Zero(n.data.rows(), n.data.cols());
}

Matrix& Tape::mutable_leaf_data(const Value& v) {
  node(v);
  Node& n = nodes_[v.id_];
  if (!n.is_leaf) throw ContractError("only leaf data can be updated in place");
  return n.data;
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape(a.data()) + " times " +
                         shape(b.data()));
  Tape& t = a.tape();
  const Value parents[] = {a, b};
  return t.record(a.data() * b.data(), parents,
                  [a, b](Tape& tape, const Matrix& g) {
                    if (a.requires_grad())
                      tape.accumulate(a, g * b.data().transpose());
                    if (b.requires_grad())
                      tape.accumulate(b, a.data().transpose() * g);
                  });
}

Value spmm(const Csr& s, const Value& b) {
  const Value parents[] = {b};
  return b.tape().record(stsparse::spmm(s, b.data()), parents,
                         [&s, b](Tape& tape, const Matrix& g) {
                           tape.accumulate(b, spmm_transposed(s, g));
                         });
}

Value propagate(const Propagation& op, const Value& b) {
  const Value parents[] = {b};
  return b.tape().record(op.apply(b.data()), parents,
                         [&op, b](Tape& tape, const Matrix& g) {
                           tape.accumulate(b, op.apply_transposed(g));
                         });
}

Value pattern_matmul(const Value& a, const BoolMatrix& pattern, const Value& b) {
  if (a.cols() != b.rows())
    throw DimensionError("pattern_matmul: " + shape(a.data()) + " times " +
                         shape(b.data()));
  if (pattern.rows() != a.rows() || pattern.cols() != a.cols())
    throw DimensionError("pattern_matmul: pattern shape differs from operand");

  using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  // Column-major sweeps visit each row's columns in increasing order, so the
  // CSR arrays come out sorted without a triplet sort.
  const Matrix& ad = a.data();
  std::vector<int> ptr(static_cast<std::size_t>(ad.rows()) + 1, 0);
  for (Index j = 0; j < ad.cols(); ++j)
    for (Index i = 0; i < ad.rows(); ++i)
      if (pattern(i, j)) ++ptr[static_cast<std::size_t>(i) + 1];
  for (std::size_t i = 1; i < ptr.size(); ++i) ptr[i] += ptr[i - 1];
  std::vector<int> cols(static_cast<std::size_t>(ptr.back()));
  std::vector<double> vals(cols.size());
  std::vector<int> fill(ptr.begin(), ptr.end() - 1);
  for (Index j = 0; j < ad.cols(); ++j)
    for (Index i = 0; i < ad.rows(); ++i)
      if (pattern(i, j)) {
        const auto at = static_cast<std::size_t>(fill[static_cast<std::size_t>(i)]++);
        cols[at] = static_cast<int>(j);
        vals[at] = ad(i, j);
      }
  const auto sparse_a = std::make_shared<SparseRows>(Eigen::Map<const SparseRows>(
      ad.rows(), ad.cols(), ptr.back(), ptr.data(), cols.data(), vals.data()));

  const Value parents[] = {a, b};
  const RowMajorMatrix product = (*sparse_a) * RowMajorMatrix(b.data());
  return a.tape().record(
      Matrix(product), parents, [a, b, sparse_a](Tape& tape, const Matrix& g) {
        const RowMajorMatrix g_rows = g;
        if (b.requires_grad())
          tape.accumulate(b, Matrix(RowMajorMatrix(sparse_a->transpose() * g_rows)));
        if (a.requires_grad()) {
          const RowMajorMatrix b_rows = b.data();
          Matrix ga = Matrix::Zero(a.rows(), a.cols());
          for (Index i = 0; i < sparse_a->outerSize(); ++i)
            for (SparseRows::InnerIterator it(*sparse_a, i); it; ++it)
              ga(i, it.col()) = g_rows.row(i).dot(b_rows.row(it.col()));
          tape.accumulate(a, ga);
        }
      });
}

Value hadamard(const Value& a, const Matrix& mask) {
  require_same_shape("hadamard", a.data(), mask);
  const Value parents[] = {a};
  return a.tape().record(a.data().cwiseProduct(mask), parents,
                         [a, mask](Tape& tape, const Matrix& g) {
                           tape.accumulate(a, g.cwiseProduct(mask));
                         });
}

Value scale_columns(const Value& a, const Vector& b) {
  if (b.size() != a.cols())
    throw DimensionError("scale_columns: " + std::to_string(b.size()) +
                         " factors for " + std::to_string(a.cols()) +
                         " columns");
  const Value parents[] = {a};
  return a.tape().record(a.data() * b.asDiagonal(), parents,
                         [a, b](Tape& tape, const Matrix& g) {
                           tape.accumulate(a, g * b.asDiagonal());
                         });
}

Value relu(const Value& a) {
  const Value parents[] = {a};
  return a.tape().record(a.data().cwiseMax(0.0), parents,
                         [a](Tape& tape, const Matrix& g) {
                           tape.accumulate(
                               a, (a.data().array() > 0.0)
                                      .select(g, Matrix::Zero(g.rows(), g.cols())));
                         });
}

Value dropout(const Value& a, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0))
    throw ContractError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  const double survivor_scale = 1.0 / (1.0 - p);
  for (Index j = 0; j < mask.cols(); ++j)
    for (Index i = 0; i < mask.rows(); ++i)
      mask(i, j) = keep(rng) ? survivor_scale : 0.0;
  return hadamard(a, mask);
}

Value add(const Value& a, const Value& b) {
  require_same_shape("add", a.data(), b.data());
  const Value parents[] = {a, b};
  return a.tape().record(a.data() + b.data(), parents,
                         [a, b](Tape& tape, const Matrix& g) {
                           tape.accumulate(a, g);
                           tape.accumulate(b, g);
                         });
}

Value add_constant(const Value& a, const Matrix& c) {
  require_same_shape("add_constant", a.data(), c);
  const Value parents[] = {a};
  return a.tape().record(a.data() + c, parents,
                         [a](Tape& tape, const Matrix& g) { tape.accumulate(a, g); });
}

Value scale(const Value& a, double factor) {
  const Value parents[] = {a};
  return a.tape().record(a.data() * factor, parents,
                         [a, factor](Tape& tape, const Matrix& g) {
                           tape.accumulate(a, g * factor);
                         });
}

Value sum(const Value& a) {
  const Value parents[] = {a};
  Matrix out(1, 1);
  out(0, 0) = a.data().sum();
  return a.tape().record(std::move(out), parents,
                         [a](Tape& tape, const Matrix& g) {
                           tape.accumulate(
                               a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
                         });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

Value softmax_cross_entropy(const Value& logits, std::span<const int> labels,
                            const NodeMask& mask) {
  const Matrix& z = logits.data();
  if (static_cast<Index>(labels.size()) != z.rows() || mask.size() != z.rows())
    throw DimensionError("softmax_cross_entropy: labels/mask length differs "
                         "from logit rows");
  const Index count = mask.count();
  if (count == 0)
    throw DegenerateMaskError("softmax_cross_entropy: mask selects no node");

  Matrix probs = softmax_rows(z);
  double loss = 0.0;
  for (Index i = 0; i < z.rows(); ++i) {
    if (!mask(i)) continue;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols())
      throw ContractError("label outside logit columns");
    const double row_max = z.row(i).maxCoeff();
    const double lse = row_max + std::log((z.row(i).array() - row_max).exp().sum());
    loss += lse - z(i, y);
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(count);

  std::vector<int> label_copy(labels.begin(), labels.end());
  const Value parents[] = {logits};
  return logits.tape().record(
      std::move(out), parents,
      [logits, probs = std::move(probs), label_copy = std::move(label_copy), mask,
       count](Tape& tape, const Matrix& g) {
        Matrix grad = Matrix::Zero(probs.rows(), probs.cols());
        const double w = g(0, 0) / static_cast<double>(count);
        for (Index i = 0; i < probs.rows(); ++i) {
          if (!mask(i)) continue;
          grad.row(i) = probs.row(i) * w;
          grad(i, label_copy[static_cast<std::size_t>(i)]) -= w;
        }
        tape.accumulate(logits, grad);
      });
}

Value normalize_dense(const Value& weights) {
  const Matrix& w = weights.data();
  if (w.rows() != w.cols())
    throw DimensionError("normalize_dense: matrix is not square");
  Matrix w_tilde = w;
  w_tilde.diagonal().array() += 1.0;
  const Vector degree = w_tilde.rowwise().sum();
  if ((degree.array() <= 0.0).any())
    throw ContractError("normalize_dense: non-positive degree");
  const Vector r = degree.array().rsqrt();
  Matrix out = r.asDiagonal() * w_tilde * r.asDiagonal();

  const Value parents[] = {weights};
  return weights.tape().record(
      std::move(out), parents,
      [weights, w_tilde = std::move(w_tilde), r](Tape& tape, const Matrix& g) {
        const Matrix m = g.cwiseProduct(w_tilde);
        const Vector d_r = m * r + m.transpose() * r;
        const Vector d_degree = -0.5 * r.array().cube() * d_r.array();
        Matrix grad = r.asDiagonal() * g * r.asDiagonal();
        grad.colwise() += d_degree;
        tape.accumulate(weights, grad);
      });
}

}  // namespace stsparse
