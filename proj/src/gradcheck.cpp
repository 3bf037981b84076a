#include "stsparse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stsparse {

namespace {

double evaluate(const TapeProgram& f, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
  const Value loss = f(tape, leaves);
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("grad_check: program must return a scalar");
  return loss.data()(0, 0);
}

}  // namespace

GradCheckReport grad_check(const TapeProgram& f, std::span<const Matrix> params,
                           double h, double tol, double abs_floor) {
  if (!(h > 0.0 && h <= 1e-3))
    throw ContractError("grad_check: step h must lie in (0, 1e-3]");

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Value> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
    const Value loss = f(tape, leaves);
    tape.backward(loss);
    for (const auto& l : leaves) analytic.push_back(l.grad());
  }

  GradCheckReport report;
  std::vector<Matrix> work(params.begin(), params.end());
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (Index k = 0; k < work[p].size(); ++k) {
      const double original = work[p](k);
      // Divide by the step actually taken: x + h rounds, 2h does not.
      const double hi = original + h;
      const double lo = original - h;
      work[p](k) = hi;
      const double up = evaluate(f, work);
      work[p](k) = lo;
      const double down = evaluate(f, work);
      work[p](k) = original;

      const double numeric = (up - down) / (hi - lo);
      const double a = analytic[p](k);
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (report.entries_checked++ == 0 || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_param = p;
        report.worst_entry = k;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < tol;
  return report;
}

}  // namespace stsparse
