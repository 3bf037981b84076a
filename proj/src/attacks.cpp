#include "stsparse/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stsparse/adam.hpp"

namespace stsparse {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::dice: return "dice";
    case AttackKind::pgd: return "pgd";
    case AttackKind::minmax: return "minmax";
  }
  return "none";
}

AttackKind parse_attack(const std::string& name) {
  if (name == "none" || name == "clean") return AttackKind::none;
  if (name == "dice") return AttackKind::dice;
  if (name == "pgd") return AttackKind::pgd;
  if (name == "minmax" || name == "min-max") return AttackKind::minmax;
  throw ConfigError("unknown attack '" + name + "'");
}

Index AttackSpec::budget(Index num_edges) const {
  validate();
  // The epsilon keeps products such as 0.15 * 20 from flooring to 2.
  return static_cast<Index>(std::floor(rate * static_cast<double>(num_edges) + 1e-9));
}

void AttackSpec::validate() const {
  if (!(rate >= 0.0 && rate <= 0.25))
    throw ContractError("attack rate must lie in [0, 0.25]");
  if (steps < 1) throw ContractError("attack steps must be >= 1");
  if (!(eta > 0.0)) throw ContractError("attack eta must be positive");
  if (retrain_every < 1) throw ContractError("retrain_every must be >= 1");
  if (inner_steps < 0) throw ContractError("inner_steps must be >= 0");
  if (rounding_samples < 1) throw ContractError("rounding_samples must be >= 1");
}

namespace {

using Pair = std::pair<Index, Index>;

Pair ordered(Index i, Index j) { return {std::min(i, j), std::max(i, j)}; }

Index pair_count(Index n) { return n * (n - 1) / 2; }

std::vector<EdgeFlip> dice_uniform(const Graph& g, Index budget, Rng& rng) {
  const Index n = g.num_nodes();
  std::vector<Pair> pool = edge_list(g.adjacency());
  Index absent_left = pair_count(n) - static_cast<Index>(pool.size());
  std::set<Pair> touched;
  std::vector<EdgeFlip> flips;
  std::uniform_int_distribution<Index> node(0, n - 1);
  std::bernoulli_distribution coin(0.5);

  auto draw_absent = [&]() -> Pair {
    for (int tries = 0; tries < 10000; ++tries) {
      const Index i = node(rng), j = node(rng);
      if (i == j) continue;
      const Pair p = ordered(i, j);
      if (!g.has_edge(p.first, p.second) && !touched.contains(p)) return p;
    }
    // Nearly complete graph: enumerate what is left.
    std::vector<Pair> left;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j)
        if (!g.has_edge(i, j) && !touched.contains({i, j})) left.emplace_back(i, j);
    std::uniform_int_distribution<std::size_t> pick(0, left.size() - 1);
    return left[pick(rng)];
  };

  for (Index b = 0; b < budget; ++b) {
    const bool can_remove = !pool.empty();
    const bool can_add = absent_left > 0;
    const bool remove = can_remove && (!can_add || coin(rng));
    if (remove) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const std::size_t idx = pick(rng);
      const Pair p = pool[idx];
      pool[idx] = pool.back();
      pool.pop_back();
      touched.insert(p);
      flips.push_back({p.first, p.second, FlipAction::remove});
    } else {
      const Pair p = draw_absent();
      --absent_left;
      touched.insert(p);
      flips.push_back({p.first, p.second, FlipAction::add});
    }
  }
  return flips;
}

std::vector<EdgeFlip> dice_label_aware(const Graph& g, Index budget, Rng& rng) {
  const auto& labels = g.labels();
  std::vector<Index> known;
  for (Index i = 0; i < g.num_nodes(); ++i)
    if (g.train_mask()(i)) known.push_back(i);
  std::vector<Pair> removable, addable;
  for (std::size_t a = 0; a < known.size(); ++a)
    for (std::size_t b = a + 1; b < known.size(); ++b) {
      const Index i = known[a], j = known[b];
      const bool same = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
      if (g.has_edge(i, j) && same) removable.emplace_back(i, j);
      if (!g.has_edge(i, j) && !same) addable.emplace_back(i, j);
    }
  if (static_cast<Index>(removable.size() + addable.size()) < budget)
    throw InfeasibleBudgetError("label-aware DICE: budget " + std::to_string(budget) +
                                " exceeds " + std::to_string(removable.size() + addable.size()) +
                                " candidate flips");
  std::bernoulli_distribution coin(0.5);
  std::vector<EdgeFlip> flips;
  for (Index b = 0; b < budget; ++b) {
    const bool remove = !removable.empty() && (addable.empty() || coin(rng));
    auto& pool = remove ? removable : addable;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t idx = pick(rng);
    const Pair p = pool[idx];
    pool[idx] = pool.back();
    pool.pop_back();
    flips.push_back({p.first, p.second, remove ? FlipAction::remove : FlipAction::add});
  }
  return flips;
}

/// Dense forward of a fixed GCN; `xw0` is X * W0.
Matrix dense_gcn_logits(const Matrix& a_norm, const Matrix& xw0,
                        std::span<const Matrix> weights) {
  Matrix h = a_norm * xw0;
  for (std::size_t l = 1; l < weights.size(); ++l)
    h = a_norm * (h.cwiseMax(0.0) * weights[l]);
  return h;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels,
                     const NodeMask& mask) {
  double total = 0.0;
  Index count = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask(i)) continue;
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
    ++count;
  }
  if (count == 0) throw DegenerateMaskError("attack loss: train mask selects no node");
  return total / static_cast<double>(count);
}

/// State shared by PGD and min-max: the relaxed symmetric perturbation over
/// all off-diagonal pairs of a dense adjacency.
class RelaxedAttack {
 public:
  RelaxedAttack(const Graph& g, const AttackSpec& spec, Index budget)
      : g_(g), spec_(spec), budget_(budget), features_(Csr::from_dense(g.features())) {
    adj_ = g.adjacency().to_dense();
    flip_sign_ = Matrix::Ones(adj_.rows(), adj_.cols()) - 2.0 * adj_;
    flip_sign_.diagonal().setZero();
    s_ = Matrix::Zero(adj_.rows(), adj_.cols());
  }

  Matrix relaxed_adjacency() const { return adj_ + flip_sign_.cwiseProduct(s_); }

  /// One projected ascent step with step size eta / sqrt(t), t >= 1.
  void step(int t, std::span<const Matrix> weights) {
    Tape tape;
    const Value s = tape.leaf(s_, true);
    const Value a = add_constant(hadamard(s, flip_sign_), adj_);
    const Value a_norm = normalize_dense(a);
    Value h = matmul(a_norm, tape.constant(spmm(features_, weights[0])));
    for (std::size_t l = 1; l < weights.size(); ++l)
      h = matmul(a_norm, matmul(relu(h), tape.constant(weights[l])));
    const Value loss = softmax_cross_entropy(h, g_.labels(), g_.train_mask());
    tape.backward(loss);
    Matrix grad = s.grad() + s.grad().transpose();
    grad.diagonal().setZero();
    const double scale = grad.cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || !std::isfinite(scale)) return;
    const double eta_t = spec_.eta / std::sqrt(static_cast<double>(t));
    const double magnitude = std::max<double>(1.0, static_cast<double>(budget_));
    Matrix next = s_ + (eta_t * magnitude / scale) * grad;
    // Each pair appears twice in the symmetric matrix.
    const Vector flat = Eigen::Map<const Vector>(next.data(), next.size());
    const Vector projected = project_budget(flat, 2.0 * static_cast<double>(budget_));
    s_ = Eigen::Map<const Matrix>(projected.data(), next.rows(), next.cols());
    s_.diagonal().setZero();
  }

  double discrete_loss(const std::vector<Pair>& pairs, std::span<const Matrix> weights,
                       const Matrix& xw0) const {
    Matrix a = adj_;
    for (const auto& [i, j] : pairs) {
      a(i, j) = 1.0 - a(i, j);
      a(j, i) = a(i, j);
    }
    return cross_entropy(dense_gcn_logits(normalize_dense_adjacency(a), xw0, weights),
                         g_.labels(), g_.train_mask());
  }

  /// Randomized rounding of the relaxed perturbation; the deterministic
  /// top-budget pairs are always among the candidates.
  std::vector<EdgeFlip> round(std::span<const Matrix> weights, Rng& rng) const {
    const Index n = adj_.rows();
    std::vector<std::pair<double, Pair>> support;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < j; ++i)
        if (s_(i, j) > 0.0) support.push_back({s_(i, j), {i, j}});
    std::stable_sort(support.begin(), support.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    const Matrix xw0 = spmm(features_, weights[0]);
    std::vector<Pair> best;
    for (std::size_t r = 0; r < support.size() && static_cast<Index>(r) < budget_; ++r)
      best.push_back(support[r].second);
    double best_loss = discrete_loss(best, weights, xw0);

    // Each sample draws min(budget, support) pairs without replacement with
    // probability proportional to s (Efraimidis-Spirakis keys), so every
    // sample is feasible and none is wasted on rejection.
    const std::size_t draw = std::min<std::size_t>(support.size(), static_cast<std::size_t>(budget_));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, std::size_t>> keys(support.size());
    for (int k = 0; k < spec_.rounding_samples && draw > 0; ++k) {
      for (std::size_t r = 0; r < support.size(); ++r)
        keys[r] = {std::log(unif(rng)) / support[r].first, r};
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(draw), keys.end(),
                        [](const auto& a, const auto& b) { return a.first > b.first; });
      std::vector<Pair> sample;
      for (std::size_t r = 0; r < draw; ++r) sample.push_back(support[keys[r].second].second);
      const double loss = discrete_loss(sample, weights, xw0);
      if (loss > best_loss) {
        best_loss = loss;
        best = std::move(sample);
      }
    }
    std::sort(best.begin(), best.end());
    std::vector<EdgeFlip> flips;
    for (const auto& [i, j] : best)
      flips.push_back({i, j, adj_(i, j) != 0.0 ? FlipAction::remove : FlipAction::add});
    return flips;
  }

 private:
  const Graph& g_;
  const AttackSpec& spec_;
  Index budget_;
  Csr features_;
  Matrix adj_;
  Matrix flip_sign_;
  Matrix s_;
};

void check_budget(const Graph& g, Index budget) {
  if (budget > pair_count(g.num_nodes()))
    throw InfeasibleBudgetError("budget " + std::to_string(budget) + " exceeds " +
                                std::to_string(pair_count(g.num_nodes())) +
                                " node pairs");
}

}  // namespace

std::vector<EdgeFlip> dice_attack(const Graph& g, const AttackSpec& spec) {
  const Index budget = spec.budget(g.num_edges());
  if (budget == 0) return {};
  check_budget(g, budget);
  Rng rng(spec.seed);
  return spec.label_aware_dice ? dice_label_aware(g, budget, rng)
                               : dice_uniform(g, budget, rng);
}

Vector project_budget(const Vector& s, double budget) {
  if (budget < 0.0) throw ContractError("project_budget: negative budget");
  const Vector clipped = s.cwiseMax(0.0).cwiseMin(1.0);
  if (clipped.sum() <= budget) return clipped;
  // sum(clip(s - mu)) is non-increasing in mu; it exceeds the budget at
  // mu = 0 and is 0 at mu = max(s).
  double lo = 0.0, hi = s.maxCoeff();
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double total = (s.array() - mid).cwiseMax(0.0).cwiseMin(1.0).sum();
    if (total > budget) lo = mid;
    else hi = mid;
  }
  return (s.array() - hi).cwiseMax(0.0).cwiseMin(1.0).matrix();
}

double surrogate_loss(const Graph& g, std::span<const Matrix> weights,
                      std::span<const EdgeFlip> flips) {
  const Graph attacked = apply_flips(g, flips);
  const ModelInput in = ModelInput::from(attacked);
  Tape tape;
  std::vector<Value> leaves;
  for (const auto& w : weights) leaves.push_back(tape.constant(w));
  Rng unused(0);
  const Matrix logits = gcn_forward(tape, in, leaves, 0.0, false, unused).logits.data();
  return cross_entropy(logits, in.labels, in.train_mask);
}

std::vector<EdgeFlip> pgd_attack(const Graph& g, const TrainedModel& victim,
                                 const AttackSpec& spec) {
  if (victim.model.arch != Arch::gcn)
    throw ContractError("pgd_attack: the surrogate must be a GCN");
  const Index budget = spec.budget(g.num_edges());
  if (budget == 0) return {};
  check_budget(g, budget);
  RelaxedAttack attack(g, spec, budget);
  for (int t = 1; t <= spec.steps; ++t) attack.step(t, victim.weights);
  Rng rng(spec.seed);
  return attack.round(victim.weights, rng);
}

std::vector<EdgeFlip> minmax_attack(const Graph& g, const ModelConfig& mcfg,
                                    const TrainConfig& tcfg, const AttackSpec& spec) {
  if (mcfg.arch != Arch::gcn)
    throw ContractError("minmax_attack: the surrogate must be a GCN");
  const Index budget = spec.budget(g.num_edges());
  if (budget == 0) return {};
  check_budget(g, budget);
  TrainedModel surrogate = train(g, mcfg, tcfg);
  std::vector<Matrix> weights = surrogate.weights;
  std::vector<AdamState> adam;
  for (const auto& w : weights) adam.push_back(AdamState::for_param(w, tcfg.lr));
  Rng rng(spec.seed);
  ModelInput in = ModelInput::from(g);
  RelaxedAttack attack(g, spec, budget);

  for (int t = 1; t <= spec.steps; ++t) {
    if (t > 1 && (t - 1) % spec.retrain_every == 0 && spec.inner_steps > 0) {
      in.propagation = Propagation(normalize_dense_adjacency(attack.relaxed_adjacency()));
      for (int inner = 0; inner < spec.inner_steps; ++inner) {
        Tape tape;
        std::vector<Value> leaves;
        for (const auto& w : weights) leaves.push_back(tape.leaf(w, true));
        const Value logits =
            gcn_forward(tape, in, leaves, mcfg.dropout_p, true, rng).logits;
        tape.backward(softmax_cross_entropy(logits, in.labels, in.train_mask));
        for (std::size_t l = 0; l < weights.size(); ++l) {
          Matrix grad = leaves[l].grad();
          if (l == 0 && tcfg.weight_decay > 0.0) grad += tcfg.weight_decay * weights[0];
          adam_step(weights[l], grad, adam[l]);
        }
      }
    }
    attack.step(t, weights);
  }
  return attack.round(weights, rng);
}

std::vector<EdgeFlip> run_attack(const Graph& g, const ModelConfig& mcfg,
                                 const TrainConfig& tcfg, const AttackSpec& spec) {
  switch (spec.kind) {
    case AttackKind::none: return {};
    case AttackKind::dice: return dice_attack(g, spec);
    case AttackKind::pgd: {
      if (spec.budget(g.num_edges()) == 0) return {};
      return pgd_attack(g, train(g, mcfg, tcfg), spec);
    }
    case AttackKind::minmax: return minmax_attack(g, mcfg, tcfg, spec);
  }
  return {};
}

std::string flips_to_text(std::span<const EdgeFlip> flips) {
  std::string out;
  for (const auto& f : flips) {
    out += f.action == FlipAction::add ? "add " : "remove ";
    out += std::to_string(f.i) + " " + std::to_string(f.j) + "\n";
  }
  return out;
}

std::vector<EdgeFlip> flips_from_text(const std::string& text, const std::string& source) {
  std::vector<EdgeFlip> flips;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string action, extra;
    long long i = 0, j = 0;
    if (!(fields >> action >> i >> j) || (fields >> extra))
      throw ParseError(source, line_no, "expected 'add|remove <i> <j>'");
    if (action != "add" && action != "remove")
      throw ParseError(source, line_no, "unknown flip action '" + action + "'");
    if (i < 0 || j < 0) throw ParseError(source, line_no, "negative node id");
    flips.push_back({static_cast<Index>(i), static_cast<Index>(j),
                     action == "add" ? FlipAction::add : FlipAction::remove});
  }
  return flips;
}

}  // namespace stsparse
