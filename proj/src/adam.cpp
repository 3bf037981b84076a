#include "stsparse/adam.hpp"

#include <cmath>

namespace stsparse {

AdamState AdamState::for_param(const Matrix& param, double lr) {
  AdamState s;
  s.m = Matrix::Zero(param.rows(), param.cols());
  s.v = Matrix::Zero(param.rows(), param.cols());
  s.lr = lr;
  return s;
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols())
    throw ContractError("adam_step: gradient shape differs from parameter");
  if (state.m.size() == 0) {
    state.m = Matrix::Zero(param.rows(), param.cols());
    state.v = Matrix::Zero(param.rows(), param.cols());
  }
  if (state.m.rows() != param.rows() || state.m.cols() != param.cols())
    throw ContractError("adam_step: moment shape differs from parameter");

  ++state.t;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double m_corr = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double v_corr = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  param.array() -= state.lr * (state.m.array() / m_corr) /
                   ((state.v.array() / v_corr).sqrt() + state.eps);
}

void adam_step(const Value& param, AdamState& state) {
  const Matrix& g = param.grad();
  if (g.rows() != param.rows() || g.cols() != param.cols() || g.size() == 0)
    throw ContractError("adam_step: parameter has no gradient (run backward)");
  adam_step(param.tape().mutable_leaf_data(param), g, state);
}

}  // namespace stsparse
