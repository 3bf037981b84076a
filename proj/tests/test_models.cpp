#include <doctest.h>

#include <cmath>

#include "stsparse/checkpoint.hpp"
#include "stsparse/fixtures.hpp"
#include "stsparse/gradcheck.hpp"
#include "stsparse/models.hpp"
#include "support.hpp"

using namespace stsparse;

namespace {

ModelConfig small_st(int d_h = 8, double alpha = 0.5) {
  ModelConfig cfg = ModelConfig::st_sparse_gcn();
  cfg.sparse.d_h = d_h;
  cfg.sparse.alpha = alpha;
  return cfg;
}

Matrix eval_logits(const ModelConfig& cfg, const std::vector<Matrix>& w,
                   const std::vector<DutyState>& duty, const ModelInput& in) {
  return predict(cfg, w, duty, in);
}

// Dense forward of a 2-layer ST-SparseGCN written out step by step.
struct StOracle {
  Matrix a;  // normalized adjacency
  Matrix x;
  int k;

  static Matrix rows_topk(const Matrix& m, int k) {
    Matrix out(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i)
      out.row(i) = testing::topk_oracle(m.row(i).transpose(), k).transpose();
    return out;
  }

  // Returns {S1, S2, logits}; `b` masks the input of the second layer.
  std::vector<Matrix> run(const std::vector<Matrix>& w, const Vector& b) const {
    const Matrix s1 = rows_topk(a * x * w[0], k);
    Matrix masked = s1;
    for (Index j = 0; j < masked.cols(); ++j) masked.col(j) *= b(j);
    const Matrix s2 = rows_topk(a * masked * w[1], k);
    return {s1, s2, s2 * w[2]};
  }
};

}  // namespace

TEST_CASE("gcn_forward: isolated node with zero features gives zero logits") {
  const NodeMask t = NodeMask::Constant(1, true);
  const NodeMask f = NodeMask::Constant(1, false);
  const Graph g(Csr(1, 1, {0, 0}, {}, {}), Matrix::Zero(1, 2), {0}, 2, t, f, f);
  const ModelInput in = ModelInput::from(g);
  ModelConfig cfg = ModelConfig::gcn();
  cfg.hidden = 2;
  const std::vector<Matrix> w{Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  CHECK(eval_logits(cfg, w, {}, in) == Matrix::Zero(1, 2));
}

TEST_CASE("gcn_forward: zero weights give the uniform loss ln C") {
  const Graph g = fixtures::eight_node();
  const ModelInput in = ModelInput::from(g);
  const ModelConfig cfg = ModelConfig::gcn();
  std::vector<Matrix> w;
  for (const auto& [r, c] : weight_shapes(cfg, in.feature_dim(), in.num_classes))
    w.push_back(Matrix::Zero(r, c));
  Tape tape;
  std::vector<Value> leaves;
  for (const auto& m : w) leaves.push_back(tape.leaf(m));
  const Value loss = training_loss(tape, in, cfg, leaves, {});
  CHECK(loss.data()(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("gcn_forward on the four-node fixture matches a hand-rolled forward") {
  const Graph g = fixtures::four_node();
  const ModelInput in = ModelInput::from(g);
  ModelConfig cfg = ModelConfig::gcn();
  cfg.hidden = 3;
  const Matrix w0 = (Matrix(3, 3) << 1, -1, 0.5, 0.2, 0.3, -0.7, -0.4, 1, 0.1).finished();
  const Matrix w1 = (Matrix(3, 2) << 0.6, -0.2, -0.5, 0.9, 0.3, 0.3).finished();
  const Matrix a = testing::normalized_oracle(g.adjacency().to_dense());
  const Matrix h = (a * g.features() * w0).cwiseMax(0.0);
  const Matrix expect = a * h * w1;
  const Matrix got = eval_logits(cfg, {w0, w1}, {}, in);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-14);

  // Training mode with p = 0 is the same function.
  Tape tape;
  std::vector<Value> leaves{tape.leaf(w0), tape.leaf(w1)};
  Rng rng(1);
  CHECK(gcn_forward(tape, in, leaves, 0.0, true, rng).logits.data() == got);
}

TEST_CASE("forward rejects mismatched weights") {
  const ModelInput in = ModelInput::from(fixtures::four_node());
  ModelConfig cfg = ModelConfig::gcn();
  CHECK_THROWS_AS(eval_logits(cfg, {Matrix::Ones(2, 16), Matrix::Ones(16, 2)}, {}, in),
                  ContractError);
  CHECK_THROWS_AS(eval_logits(cfg, {Matrix::Ones(3, 16)}, {}, in), ContractError);
  const ModelConfig st = small_st();
  CHECK_THROWS_AS(eval_logits(st, {Matrix::Ones(3, 8), Matrix::Ones(8, 8)}, {}, in),
                  ContractError);
}

TEST_CASE("neutral ST-SparseGCN equals a GCN with identity activation") {
  const Graph g = fixtures::six_node();
  const ModelInput in = ModelInput::from(g);
  ModelConfig cfg = small_st(5);
  cfg.sparse.gamma = 0.0;
  cfg.sparse.tau = 0.0;
  cfg.sparse.k_override = 5;
  std::mt19937_64 rng(2);
  const std::vector<Matrix> w{testing::random_matrix(4, 5, rng), testing::random_matrix(5, 5, rng),
                              testing::random_matrix(5, 2, rng)};
  DutyState used = DutyState::zeros(5);
  used.s_hat = Vector::Constant(5, 3.0);
  const std::vector<DutyState> duty{used, used};
  const Matrix a = testing::normalized_oracle(g.adjacency().to_dense());
  const Matrix expect = a * (a * g.features() * w[0]) * w[1] * w[2];
  CHECK((eval_logits(cfg, w, duty, in) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ST-SparseGCN forward matches a dense oracle with a nonzero mask") {
  const Graph g = fixtures::eight_node();
  const ModelInput in = ModelInput::from(g);
  ModelConfig cfg = small_st(6, 0.5);
  cfg.sparse.gamma = 0.8;
  std::mt19937_64 rng(5);
  const std::vector<Matrix> w{testing::random_matrix(6, 6, rng), testing::random_matrix(6, 6, rng),
                              testing::random_matrix(6, 2, rng)};
  DutyState first = DutyState::zeros(6);
  first.s_hat = (Vector(6) << 0.1, 2.0, 0.0, 0.7, 1.3, 0.4).finished();
  const std::vector<DutyState> duty{first, DutyState::zeros(6)};
  const StOracle oracle{testing::normalized_oracle(g.adjacency().to_dense()), g.features(), 3};
  const Vector b = (-0.8 * first.s_hat.array()).exp().matrix();
  const auto expect = oracle.run(w, b);
  CHECK((eval_logits(cfg, w, duty, in) - expect[2]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("hidden activation ratio never exceeds alpha") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = testing::random_graph(12, 5, 3, 0.3, rng);
    const double alpha = trial % 2 ? 0.1 : 0.3;
    ModelConfig cfg = small_st(20, alpha);
    cfg.sparse.gamma = 0.3;
    cfg.sparse.tau = 0.05;
    TrainConfig t;
    t.epochs = 15;
    t.seed = static_cast<std::uint64_t>(trial);
    const TrainedModel m = train(g, cfg, t);
    for (const auto& rec : m.history) {
      REQUIRE(rec.activation_ratio.size() == 2);
      for (double r : rec.activation_ratio) CHECK(r <= alpha + 1e-15);
    }
  }
}

TEST_CASE("duty over two epochs matches a step-by-step simulation") {
  const Graph g = fixtures::two_node();
  const ModelInput in = ModelInput::from(g);
  ModelConfig cfg = small_st(4, 0.5);
  cfg.sparse.gamma = 0.5;
  cfg.sparse.tau = 0.1;
  TrainConfig t;
  t.epochs = 2;
  t.seed = 3;
  const TrainedModel m = train(in, cfg, t);

  // Oracle: same initial weights, dense forward, central-difference gradient,
  // a first Adam step written out (corrected moments give -lr * g / (|g| + eps)).
  Rng rng(t.seed);
  std::vector<Matrix> w = init_weights(cfg, 2, 2, rng);
  const StOracle oracle{testing::normalized_oracle(g.adjacency().to_dense()), g.features(), 2};
  const Vector ones = Vector::Ones(4);
  const auto e0 = oracle.run(w, ones);
  auto counts = [](const Matrix& s) {
    return Vector((s.array() != 0.0).cast<double>().colwise().sum().transpose());
  };
  Vector s_hat0 = 0.1 * counts(e0[0]);
  Vector s_hat1 = 0.1 * counts(e0[1]);

  std::vector<Matrix> next = w;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Matrix grad = testing::numeric_gradient(
        [&](const Matrix& probe) {
          std::vector<Matrix> p = w;
          p[l] = probe;
          return testing::cross_entropy_oracle(oracle.run(p, ones)[2], g.labels(), g.train_mask());
        },
        w[l]);
    if (l == 0) grad += t.weight_decay * w[0];
    for (Index i = 0; i < grad.size(); ++i)
      next[l].data()[i] -= t.lr * grad.data()[i] / (std::abs(grad.data()[i]) + 1e-8);
  }
  const Vector b1 = (-0.5 * s_hat0.array()).exp().matrix();
  const auto e1 = oracle.run(next, b1);
  s_hat0 += 0.1 * counts(e1[0]);
  s_hat1 += 0.1 * counts(e1[1]);

  REQUIRE(m.duty.size() == 2);
  CHECK(m.duty[0].epoch == 2);
  CHECK((m.duty[0].s_hat - s_hat0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((m.duty[1].s_hat - s_hat1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(m.duty[0].counts == 10.0 * s_hat0);
}

TEST_CASE("separable eight-node fixture reaches full train accuracy") {
  const Graph g = fixtures::eight_node();
  TrainConfig t;
  SUBCASE("gcn") {
    const TrainedModel m = train(g, ModelConfig::gcn(), t);
    CHECK(evaluate(m, ModelInput::from(g), g.train_mask()) == 1.0);
  }
  SUBCASE("st-sparse") {
    const TrainedModel m = train(g, small_st(32, 0.25), t);
    CHECK(evaluate(m, ModelInput::from(g), g.train_mask()) == 1.0);
  }
}

TEST_CASE("training is bit-exact under a fixed seed") {
  const Graph g = fixtures::eight_node();
  TrainConfig t;
  t.epochs = 30;
  t.seed = 11;
  for (const ModelConfig& cfg : {ModelConfig::gcn(), small_st(16, 0.25)}) {
    const TrainedModel a = train(g, cfg, t);
    const TrainedModel b = train(g, cfg, t);
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t l = 0; l < a.weights.size(); ++l) CHECK(a.weights[l] == b.weights[l]);
    for (std::size_t l = 0; l < a.duty.size(); ++l) CHECK(a.duty[l].s_hat == b.duty[l].s_hat);
    t.seed = 12;
    const TrainedModel c = train(g, cfg, t);
    CHECK(c.weights[0] != a.weights[0]);
    t.seed = 11;
  }
}

TEST_CASE("training preconditions and divergence") {
  const Graph g = fixtures::eight_node();
  TrainConfig t;
  t.epochs = 0;
  CHECK_THROWS_AS(train(g, ModelConfig::gcn(), t), ContractError);
  t.epochs = 20;
  t.lr = 1e300;
  try {
    train(g, ModelConfig::gcn(), t);
    FAIL("expected a training failure");
  } catch (const TrainingFailure& e) {
    CHECK(e.epoch() >= 1);
    CHECK(e.epoch() < 20);
  }
}

TEST_CASE("training loss is non-increasing over 10-epoch windows after epoch 20") {
  const Graph g = fixtures::eight_node();
  TrainConfig t;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    t.seed = seed;
    ModelConfig gcn = ModelConfig::gcn();
    gcn.dropout_p = 0.0;
    const TrainedModel m = train(g, gcn, t);
    for (std::size_t e = 20; e + 10 < m.history.size(); ++e) {
      CAPTURE(e);
      CHECK(m.history[e + 10].loss <= m.history[e].loss);
    }
  }
}

TEST_CASE("ST-SparseGCN loss only rises after convergence") {
  // TopK support switches make the loss piecewise; once it is near zero,
  // Adam's unit-scale steps flip supports and the loss wobbles around 1e-4.
  const Graph g = fixtures::eight_node();
  TrainConfig t;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    t.seed = seed;
    const TrainedModel m = train(g, small_st(32, 0.25), t);
    for (std::size_t e = 20; e + 10 < m.history.size(); ++e) {
      CAPTURE(e);
      if (m.history[e + 10].loss > m.history[e].loss) CHECK(m.history[e].loss < 1e-3);
    }
  }
}

TEST_CASE("GCN activates more hidden units than ST-SparseGCN") {
  const Graph g = fixtures::eight_node();
  TrainConfig t;
  t.epochs = 30;
  const TrainedModel gcn = train(g, ModelConfig::gcn(), t);
  const TrainedModel st = train(g, small_st(40, 0.1), t);
  for (std::size_t e = 1; e < 30; ++e)
    CHECK(gcn.history[e].activation_ratio[0] > st.history[e].activation_ratio[0]);
}

TEST_CASE("accuracy and evaluate examples") {
  const std::vector<int> labels{0, 1, 0, 1};
  const NodeMask all = NodeMask::Constant(4, true);
  const Matrix perfect = (Matrix(4, 2) << 1, 0, 0, 1, 1, 0, 0, 1).finished();
  CHECK(accuracy(perfect, labels, all) == 1.0);
  const Matrix constant = (Matrix(4, 2) << 1, 0, 1, 0, 1, 0, 1, 0).finished();
  CHECK(accuracy(constant, labels, all) == 0.5);
  CHECK_THROWS_AS(accuracy(perfect, labels, NodeMask::Constant(4, false)), DegenerateMaskError);

  const Graph g = fixtures::eight_node();
  TrainConfig t;
  t.epochs = 5;
  const TrainedModel m = train(g, ModelConfig::gcn(), t);
  const ModelInput in = ModelInput::from(g);
  CHECK_THROWS_AS(evaluate(m, in, NodeMask::Constant(8, false)), DegenerateMaskError);
  // Eval mode is a pure function.
  CHECK(predict(m, in) == predict(m, in));
}

TEST_CASE("loss gradients match central differences") {
  const Graph g = fixtures::four_node();
  const ModelInput in = ModelInput::from(g);
  std::mt19937_64 rng(31);
  SUBCASE("gcn") {
    ModelConfig cfg = ModelConfig::gcn();
    cfg.hidden = 5;
    Rng init(1);
    const auto w = init_weights(cfg, 3, 2, init);
    const TapeProgram f = [&](Tape& tape, std::span<const Value> p) {
      return training_loss(tape, in, cfg, p, {});
    };
    CHECK(grad_check(f, w).max_relative_error < 1e-4);
  }
  SUBCASE("st-sparse at a mask-stable point") {
    ModelConfig cfg = small_st(8, 0.5);
    cfg.sparse.gamma = 0.5;
    std::vector<DutyState> duty(2, DutyState::zeros(8));
    duty[0].s_hat = (Vector(8) << 0, 1, 2, 0.5, 0, 3, 1, 0.2).finished();
    for (int attempt = 0; attempt < 50; ++attempt) {
      Rng init(static_cast<std::uint64_t>(attempt));
      const auto w = init_weights(cfg, 3, 2, init);
      Tape tape;
      std::vector<Value> leaves;
      for (const auto& m : w) leaves.push_back(tape.leaf(m));
      ForwardResult fwd;
      training_loss(tape, in, cfg, leaves, duty, &fwd);
      double margin = INFINITY;
      for (const auto& pre : fwd.pre_topk) margin = std::min(margin, topk_margin(pre, 4));
      if (margin < 1e-3) continue;
      const TapeProgram f = [&](Tape& t, std::span<const Value> p) {
        return training_loss(t, in, cfg, p, duty);
      };
      CHECK(grad_check(f, w).max_relative_error < 1e-4);
      return;
    }
    FAIL("no mask-stable initialization found");
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const Graph g = fixtures::eight_node();
  ModelConfig cfg = small_st(16, 0.25);
  cfg.sparse.duty_decay = 0.9;
  TrainConfig t;
  t.epochs = 12;
  t.seed = 4;
  const TrainedModel m = train(g, cfg, t);
  const TrainedModel r = checkpoint_from_json(checkpoint_to_json(m));
  CHECK(r.model.arch == m.model.arch);
  CHECK(r.model.sparse.d_h == 16);
  CHECK(r.model.sparse.duty_decay == 0.9);
  CHECK(r.train.seed == 4);
  CHECK(r.best_val_epoch == m.best_val_epoch);
  REQUIRE(r.weights.size() == m.weights.size());
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    CHECK(r.weights[l] == m.weights[l]);
    CHECK(r.best_val_weights[l] == m.best_val_weights[l]);
  }
  for (std::size_t l = 0; l < m.duty.size(); ++l) {
    CHECK(r.duty[l].s_hat == m.duty[l].s_hat);
    CHECK(r.duty[l].counts == m.duty[l].counts);
    CHECK(r.duty[l].epoch == m.duty[l].epoch);
  }
  const ModelInput in = ModelInput::from(g);
  CHECK(predict(r, in) == predict(m, in));
  CHECK(checkpoint_to_json(r) == checkpoint_to_json(m));

  CHECK_THROWS_AS(checkpoint_from_json("{\"format\":\"other\"}"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_json("not json"), ParseError);
}
