#include "stsparse/models.hpp"

#include <cmath>

#include "stsparse/adam.hpp"

namespace stsparse {

std::string to_string(Arch arch) {
  return arch == Arch::gcn ? "gcn" : "st_sparse_gcn";
}

Arch parse_arch(const std::string& name) {
  if (name == "gcn") return Arch::gcn;
  if (name == "st_sparse_gcn" || name == "st-sparse-gcn" || name == "stsparse")
    return Arch::st_sparse_gcn;
  throw ConfigError("unknown architecture '" + name + "'");
}

ModelConfig ModelConfig::gcn() { return ModelConfig{}; }

ModelConfig ModelConfig::st_sparse_gcn() {
  ModelConfig c;
  c.arch = Arch::st_sparse_gcn;
  c.dropout_p = 0.0;
  return c;
}

void ModelConfig::validate() const {
  if (layers < 1) throw ContractError("model needs at least one layer");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ContractError("dropout_p must lie in [0, 1)");
  if (arch == Arch::gcn && hidden < 1)
    throw ContractError("GCN hidden width must be positive");
  if (arch == Arch::st_sparse_gcn) sparse.validate();
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be at least 1");
  if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
  if (weight_decay < 0.0) throw ContractError("weight decay must be >= 0");
}

ModelInput ModelInput::from(const Graph& g) {
  return from(g, Propagation::of(g));
}

ModelInput ModelInput::from(const Graph& g, Propagation propagation) {
  if (propagation.size() != g.num_nodes())
    throw DimensionError("propagation size differs from node count");
  return ModelInput{std::move(propagation),
                    Csr::from_dense(g.features()),
                    g.labels(),
                    g.num_classes(),
                    g.train_mask(),
                    g.val_mask(),
                    g.test_mask()};
}

std::vector<std::pair<Index, Index>> weight_shapes(const ModelConfig& cfg,
                                                   Index input_dim,
                                                   int num_classes) {
  std::vector<std::pair<Index, Index>> shapes;
  if (cfg.arch == Arch::gcn) {
    Index in = input_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      const Index out = (l + 1 == cfg.layers) ? num_classes : cfg.hidden;
      shapes.emplace_back(in, out);
      in = out;
    }
  } else {
    Index in = input_dim;
    for (int l = 0; l < cfg.layers; ++l) {
      shapes.emplace_back(in, cfg.sparse.d_h);
      in = cfg.sparse.d_h;
    }
    shapes.emplace_back(in, num_classes);
  }
  return shapes;
}

std::vector<Matrix> init_weights(const ModelConfig& cfg, Index input_dim,
                                 int num_classes, Rng& rng) {
  std::vector<Matrix> weights;
  for (const auto& [rows, cols] : weight_shapes(cfg, input_dim, num_classes)) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) w(i, j) = dist(rng);
    weights.push_back(std::move(w));
  }
  return weights;
}

namespace {

void check_weights(const ModelConfig& cfg, const ModelInput& in,
                   std::span<const Value> weights) {
  const auto shapes = weight_shapes(cfg, in.feature_dim(), in.num_classes);
  if (shapes.size() != weights.size())
    throw ContractError("expected " + std::to_string(shapes.size()) +
                        " weight matrices, got " + std::to_string(weights.size()));
  for (std::size_t l = 0; l < shapes.size(); ++l)
    if (weights[l].rows() != shapes[l].first || weights[l].cols() != shapes[l].second)
      throw ContractError("weight " + std::to_string(l) + " is " +
                          std::to_string(weights[l].rows()) + "x" +
                          std::to_string(weights[l].cols()) + ", expected " +
                          std::to_string(shapes[l].first) + "x" +
                          std::to_string(shapes[l].second));
}

}  // namespace

ForwardResult gcn_forward(Tape& tape, const ModelInput& in,
                          std::span<const Value> weights, double dropout_p,
                          bool training, Rng& rng) {
  (void)tape;
  if (weights.empty()) throw ContractError("gcn_forward: no weights");
  if (weights[0].rows() != in.feature_dim())
    throw ContractError("gcn_forward: first weight does not match features");
  ForwardResult result;
  Value h = propagate(in.propagation, spmm(in.features, weights[0]));
  for (std::size_t l = 1; l < weights.size(); ++l) {
    h = relu(h);
    result.hidden.push_back(h.data());
    h = dropout(h, dropout_p, rng, training);
    h = propagate(in.propagation, matmul(h, weights[l]));
  }
  result.logits = h;
  return result;
}

ForwardResult st_sparse_forward(Tape& tape, const ModelInput& in,
                                std::span<const Value> weights,
                                std::span<const DutyState> duty,
                                const ModelConfig& cfg, bool training, Rng& rng) {
  (void)tape;
  check_weights(cfg, in, weights);
  const int layers = cfg.layers;
  if (!duty.empty() && static_cast<int>(duty.size()) != layers)
    throw ContractError("need one duty state per sparse layer");
  const int k = cfg.sparse.k();
  const double gamma = cfg.sparse.effective_gamma();

  ForwardResult result;
  SparseLayerOutput out =
      st_input_layer_forward(in.propagation, in.features, weights[0], k);
  result.pre_topk.push_back(out.pre_activation.data());
  for (int l = 1; l < layers; ++l) {
    result.hidden.push_back(out.activation.data());
    const Value input = dropout(out.activation, cfg.dropout_p, rng, training);
    const AttentionMask mask =
        duty.empty() ? AttentionMask{Vector::Ones(cfg.sparse.d_h)}
                     : attention_mask(duty[static_cast<std::size_t>(l - 1)], gamma);
    out = st_layer_forward(in.propagation, input, weights[static_cast<std::size_t>(l)],
                           &mask, k, &out.kept);
    result.pre_topk.push_back(out.pre_activation.data());
  }
  result.hidden.push_back(out.activation.data());
  const Value head_input = dropout(out.activation, cfg.dropout_p, rng, training);
  result.logits = matmul(head_input, weights[static_cast<std::size_t>(layers)]);
  return result;
}

namespace {

ForwardResult forward(Tape& tape, const ModelInput& in, const ModelConfig& cfg,
                      std::span<const Value> weights,
                      std::span<const DutyState> duty, bool training, Rng& rng) {
  if (cfg.arch == Arch::gcn) {
    check_weights(cfg, in, weights);
    return gcn_forward(tape, in, weights, cfg.dropout_p, training, rng);
  }
  return st_sparse_forward(tape, in, weights, duty, cfg, training, rng);
}

std::vector<double> ratios(const std::vector<Matrix>& hidden) {
  std::vector<double> out;
  out.reserve(hidden.size());
  for (const auto& h : hidden) out.push_back(activation_ratio(h));
  return out;
}

}  // namespace

Value training_loss(Tape& tape, const ModelInput& in, const ModelConfig& cfg,
                    std::span<const Value> weights, std::span<const DutyState> duty,
                    ForwardResult* forward_out) {
  Rng unused(0);
  ForwardResult fwd = forward(tape, in, cfg, weights, duty, /*training=*/false, unused);
  const Value loss = softmax_cross_entropy(fwd.logits, in.labels, in.train_mask);
  if (forward_out) *forward_out = std::move(fwd);
  return loss;
}

double accuracy(const Matrix& logits, std::span<const int> labels,
                const NodeMask& mask) {
  if (static_cast<Index>(labels.size()) != logits.rows() ||
      mask.size() != logits.rows())
    throw DimensionError("accuracy: labels/mask length differs from logits");
  const Index count = mask.count();
  if (count == 0) throw DegenerateMaskError("accuracy: mask selects no node");
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (!mask(i)) continue;
    Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(count);
}

TrainedModel train(const ModelInput& in, const ModelConfig& mcfg,
                   const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  if (in.train_mask.count() == 0)
    throw DegenerateMaskError("train: train mask selects no node");

  Rng rng(tcfg.seed);
  TrainedModel model;
  model.model = mcfg;
  model.train = tcfg;
  model.weights = init_weights(mcfg, in.feature_dim(), in.num_classes, rng);
  if (mcfg.arch == Arch::st_sparse_gcn)
    model.duty.assign(static_cast<std::size_t>(mcfg.layers),
                      DutyState::zeros(mcfg.sparse.d_h));

  std::vector<AdamState> adam;
  for (const auto& w : model.weights) adam.push_back(AdamState::for_param(w, tcfg.lr));

  const bool has_val = in.val_mask.count() > 0;
  double best_val = -1.0;
  model.history.reserve(static_cast<std::size_t>(tcfg.epochs));

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(model.weights.size());
    for (const auto& w : model.weights) leaves.push_back(tape.leaf(w, true));

    const ForwardResult fwd =
        forward(tape, in, mcfg, leaves, model.duty, /*training=*/true, rng);
    const Value loss = softmax_cross_entropy(fwd.logits, in.labels, in.train_mask);
    const double loss_value = loss.data()(0, 0);
    if (!std::isfinite(loss_value)) throw TrainingFailure(epoch);
    tape.backward(loss);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_value;
    rec.activation_ratio = ratios(fwd.hidden);
    rec.train_acc = accuracy(fwd.logits.data(), in.labels, in.train_mask);
    if (has_val) {
      if (mcfg.dropout_p > 0.0) {
        rec.val_acc = accuracy(predict(mcfg, model.weights, model.duty, in),
                               in.labels, in.val_mask);
      } else {
        rec.val_acc = accuracy(fwd.logits.data(), in.labels, in.val_mask);
      }
      if (rec.val_acc > best_val) {
        best_val = rec.val_acc;
        model.best_val_epoch = epoch;
        model.best_val_weights = model.weights;
      }
    }

    if (mcfg.arch == Arch::st_sparse_gcn) {
      for (std::size_t l = 0; l < model.duty.size(); ++l)
        model.duty[l] = update_duty(model.duty[l], fwd.hidden[l],
                                    mcfg.sparse.effective_tau(),
                                    mcfg.sparse.duty_decay);
    }

    for (std::size_t l = 0; l < model.weights.size(); ++l) {
      Matrix grad = leaves[l].grad();
      if (l == 0 && tcfg.weight_decay > 0.0) grad += tcfg.weight_decay * model.weights[0];
      adam_step(model.weights[l], grad, adam[l]);
    }
    model.history.push_back(std::move(rec));
  }
  if (!has_val) {
    model.best_val_epoch = tcfg.epochs - 1;
    model.best_val_weights = model.weights;
  }
  return model;
}

TrainedModel train(const Graph& g, const ModelConfig& mcfg,
                   const TrainConfig& tcfg) {
  return train(ModelInput::from(g), mcfg, tcfg);
}

Matrix predict(const ModelConfig& cfg, std::span<const Matrix> weights,
               std::span<const DutyState> duty, const ModelInput& in) {
  Tape tape;
  std::vector<Value> leaves;
  for (const auto& w : weights) leaves.push_back(tape.constant(w));
  Rng unused(0);
  return forward(tape, in, cfg, leaves, duty, /*training=*/false, unused)
      .logits.data();
}

Matrix predict(const TrainedModel& m, const ModelInput& in) {
  return predict(m.model, m.weights, m.duty, in);
}

double evaluate(const TrainedModel& m, const ModelInput& in, const NodeMask& mask) {
  if (mask.count() == 0) throw DegenerateMaskError("evaluate: empty mask");
  return accuracy(predict(m, in), in.labels, mask);
}

}  // namespace stsparse
