#ifndef STSPARSE_ADAM_HPP
#define STSPARSE_ADAM_HPP

#include "stsparse/tape.hpp"

namespace stsparse {

struct AdamState {
  Matrix m;
  Matrix v;
  long t = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zero moments shaped like `param`.
  static AdamState for_param(const Matrix& param, double lr = 0.01);
};

/// One bias-corrected Adam update of `param` with gradient `grad`.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state);

/// Updates a leaf value in place from its populated gradient. Throws
/// ContractError when backward has not produced a gradient.
void adam_step(const Value& param, AdamState& state);

}  // namespace stsparse

#endif  // STSPARSE_ADAM_HPP
