#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "primflow/tape.hpp"

namespace primflow::ad {

/// Verdict of a finite-difference comparison against analytic gradients.
struct GradReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  int64_t worst_index = 0;  // flat index into the concatenated parameter vector
  int64_t n_checked = 0;    // coordinates above the magnitude floor
  bool pass(double tol = 1e-4) const { return max_rel_err <= tol; }
};

/// A scalar-valued differentiable function of a list of parameter tensors.
/// The callable receives leafed Vals in the same order as the tensors.
using ScalarFn = std::function<Val(Tape&, const std::vector<Val>&)>;

/// Evaluates f and its gradient with respect to every parameter tensor.
/// Throws std::runtime_error naming the offending node if any forward value
/// or gradient is non-finite.
std::pair<double, std::vector<Tensor>> eval_with_grad(const ScalarFn& f,
                                                      const std::vector<Tensor>& params);

/// Central finite differences, (f(p+eps e_i) - f(p-eps e_i)) / (2 eps), per
/// coordinate of every parameter tensor, compared against the analytic
/// gradient. Relative error is measured only where |analytic|+|fd| exceeds
/// denom_floor.
GradReport grad_check(const ScalarFn& f, const std::vector<Tensor>& params, double eps = 1e-5,
                      double denom_floor = 1e-8);

}  // namespace primflow::ad
