#ifndef STSPARSE_GRADCHECK_HPP
#define STSPARSE_GRADCHECK_HPP

#include <functional>
#include <span>
#include <vector>

#include "stsparse/tape.hpp"

namespace stsparse {

/// Builds a scalar loss on `tape` from leaf values holding the parameters.
/// Must be deterministic.
using TapeProgram = std::function<Value(Tape& tape, std::span<const Value> params)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  /// Parameter and flat (column-major) entry of the worst mismatch.
  std::size_t worst_param = 0;
  Index worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients to central differences
/// (f(x+h) - f(x-h)) / 2h. The relative error of one entry is
/// |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(const TapeProgram& f, std::span<const Matrix> params,
                           double h = 1e-5, double tol = 1e-4,
                           double abs_floor = 1e-6);

}  // namespace stsparse

#endif  // STSPARSE_GRADCHECK_HPP
