#ifndef STSPARSE_MODELS_HPP
#define STSPARSE_MODELS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stsparse/st_sparse.hpp"
#include "stsparse/tape.hpp"

namespace stsparse {

enum class Arch { gcn, st_sparse_gcn };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& name);

struct ModelConfig {
  Arch arch = Arch::gcn;
  /// GCN: number of graph convolutions. ST-SparseGCN: number of sparse
  /// layers before the linear head.
  int layers = 2;
  /// GCN hidden width; ST-SparseGCN uses sparse.d_h.
  int hidden = 16;
  double dropout_p = 0.5;
  SparseConfig sparse;

  static ModelConfig gcn();
  static ModelConfig st_sparse_gcn();
  void validate() const;
};

struct TrainConfig {
  int epochs = 200;
  double lr = 0.01;
  std::uint64_t seed = 0;
  /// L2 penalty on the first-layer weights, added to their gradient.
  double weight_decay = 5e-4;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  /// Fraction of nonzero hidden activations, one entry per hidden layer.
  std::vector<double> activation_ratio;
};

struct TrainedModel {
  ModelConfig model;
  TrainConfig train;
  /// Final-epoch weights: layer matrices in order, the head last.
  std::vector<Matrix> weights;
  std::vector<Matrix> best_val_weights;
  int best_val_epoch = -1;
  /// One state per sparse layer (empty for GCN).
  std::vector<DutyState> duty;
  std::vector<EpochRecord> history;
};

/// Per-graph inputs shared by every forward pass of a run.
struct ModelInput {
  Propagation propagation;
  /// Node features in CSR form (bag-of-words inputs are very sparse).
  Csr features;
  std::vector<int> labels;
  int num_classes = 0;
  NodeMask train_mask;
  NodeMask val_mask;
  NodeMask test_mask;

  static ModelInput from(const Graph& g);
  /// Uses a precomputed propagation (e.g. a low-rank defense) instead of
  /// the normalized adjacency of `g`.
  static ModelInput from(const Graph& g, Propagation propagation);

  Index num_nodes() const { return features.rows(); }
  Index feature_dim() const { return features.cols(); }
};

/// Glorot-uniform weights for every layer of `cfg`, drawn from `rng`.
std::vector<Matrix> init_weights(const ModelConfig& cfg, Index input_dim,
                                 int num_classes, Rng& rng);

/// Shapes the weights must have for `cfg`.
std::vector<std::pair<Index, Index>> weight_shapes(const ModelConfig& cfg,
                                                   Index input_dim,
                                                   int num_classes);

struct ForwardResult {
  Value logits;
  /// Hidden activations (post-ReLU or post-TopK, before dropout).
  std::vector<Matrix> hidden;
  /// ST-SparseGCN: products entering each TopK.
  std::vector<Matrix> pre_topk;
};

/// ReLU GCN: hidden layers propagate, project and rectify; the last layer
/// emits logits. Dropout sits between layers.
ForwardResult gcn_forward(Tape& tape, const ModelInput& in,
                          std::span<const Value> weights, double dropout_p,
                          bool training, Rng& rng);

/// ST-SparseGCN: sparse layers followed by a linear head. Layer l >= 1
/// input is masked by the attention of duty[l-1]; the raw features and the
/// head input are unmasked.
ForwardResult st_sparse_forward(Tape& tape, const ModelInput& in,
                                std::span<const Value> weights,
                                std::span<const DutyState> duty,
                                const ModelConfig& cfg, bool training, Rng& rng);

/// Eval-mode (dropout-free) train-mask cross-entropy of `cfg` on the tape;
/// deterministic, so it can be handed to grad_check. `duty` stays fixed.
Value training_loss(Tape& tape, const ModelInput& in, const ModelConfig& cfg,
                    std::span<const Value> weights, std::span<const DutyState> duty,
                    ForwardResult* forward_out = nullptr);

/// Trains from a seeded initialization with Adam on the train-mask loss.
/// Throws TrainingFailure on a non-finite loss.
TrainedModel train(const ModelInput& in, const ModelConfig& mcfg,
                   const TrainConfig& tcfg);
TrainedModel train(const Graph& g, const ModelConfig& mcfg,
                   const TrainConfig& tcfg);

/// Eval-mode logits (no dropout, duty frozen at its final state).
Matrix predict(const TrainedModel& m, const ModelInput& in);
Matrix predict(const ModelConfig& cfg, std::span<const Matrix> weights,
               std::span<const DutyState> duty, const ModelInput& in);

/// Fraction of masked nodes whose argmax logit equals the label.
double accuracy(const Matrix& logits, std::span<const int> labels,
                const NodeMask& mask);
double evaluate(const TrainedModel& m, const ModelInput& in, const NodeMask& mask);

}  // namespace stsparse

#endif  // STSPARSE_MODELS_HPP
