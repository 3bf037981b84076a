#ifndef STSPARSE_ATTACKS_HPP
#define STSPARSE_ATTACKS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "stsparse/models.hpp"

namespace stsparse {

enum class AttackKind { none, dice, pgd, minmax };

std::string to_string(AttackKind kind);
AttackKind parse_attack(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::dice;
  /// Fraction of edges to flip, in [0, 0.25].
  double rate = 0.05;
  /// PGD / min-max ascent iterations.
  int steps = 100;
  /// Base step size, decayed as eta / sqrt(t). Gradients are scaled so the
  /// steepest pair moves by eta * max(1, budget) on the first step.
  double eta = 0.05;
  /// Min-max: surrogate weights are refit every this many ascent steps.
  int retrain_every = 10;
  /// Min-max: Adam steps per refit.
  int inner_steps = 20;
  std::uint64_t seed = 0;
  /// Randomized-rounding samples.
  int rounding_samples = 20;
  /// DICE: delete edges inside a class, add edges across classes (train
  /// labels only) instead of uniform flips.
  bool label_aware_dice = false;

  /// floor(rate * num_edges).
  Index budget(Index num_edges) const;
  void validate() const;
};

/// Uniform random flips: with probability 1/2 remove a random existing edge,
/// otherwise add a random absent pair. No pair is flipped twice.
std::vector<EdgeFlip> dice_attack(const Graph& g, const AttackSpec& spec);

/// Euclidean projection onto {s in [0,1]^m : sum(s) <= budget}, by bisection
/// on the multiplier of the sum constraint.
Vector project_budget(const Vector& s, double budget);

/// Training-mask cross-entropy of a fixed GCN (eval mode) on `g` with
/// `flips` applied.
double surrogate_loss(const Graph& g, std::span<const Matrix> weights,
                      std::span<const EdgeFlip> flips);

/// PGD topology attack against fixed weights of a clean-trained GCN.
std::vector<EdgeFlip> pgd_attack(const Graph& g, const TrainedModel& victim,
                                 const AttackSpec& spec);

/// Min-max attack: PGD ascent on the perturbation interleaved with refits
/// of a GCN surrogate (trained from `mcfg`/`tcfg`) on the relaxed graph.
std::vector<EdgeFlip> minmax_attack(const Graph& g, const ModelConfig& mcfg,
                                    const TrainConfig& tcfg, const AttackSpec& spec);

/// Dispatches on spec.kind. PGD trains its own clean surrogate from
/// `mcfg`/`tcfg` (which must describe a GCN).
std::vector<EdgeFlip> run_attack(const Graph& g, const ModelConfig& mcfg,
                                 const TrainConfig& tcfg, const AttackSpec& spec);

/// One `add|remove <i> <j>` line per flip.
std::string flips_to_text(std::span<const EdgeFlip> flips);
/// Parses the text form; `source` names the input in ParseError messages.
std::vector<EdgeFlip> flips_from_text(const std::string& text,
                                      const std::string& source = "flips");

}  // namespace stsparse

#endif  // STSPARSE_ATTACKS_HPP
