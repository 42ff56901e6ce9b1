#include "primflow/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace primflow::ad {

namespace {

double eval_only(const ScalarFn& f, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Val> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, "param"));
  Val root = f(tape, leaves);
  return tape.val(root)[0];
}

}  // namespace

std::pair<double, std::vector<Tensor>> eval_with_grad(const ScalarFn& f,
                                                      const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Val> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, "param"));
  Val root = f(tape, leaves);
  int32_t bad = tape.first_nonfinite();
  if (bad >= 0)
    throw std::runtime_error(std::string("numerical failure: non-finite value in term '") +
                             tape.tag_of(Val{bad}) + "'");
  tape.backward(root);
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (size_t i = 0; i < leaves.size(); ++i) {
    const Tensor& g = tape.grad(leaves[i]);
    if (!g.all_finite())
      throw std::runtime_error("numerical failure: non-finite gradient for parameter " +
                               std::to_string(i));
    grads.push_back(g);
  }
  return {tape.val(root)[0], std::move(grads)};
}

GradReport grad_check(const ScalarFn& f, const std::vector<Tensor>& params, double eps,
                      double denom_floor) {
  if (!(eps > 0.0 && eps <= 1e-2)) throw std::invalid_argument("grad_check: eps out of (0, 1e-2]");
  auto [value, grads] = eval_with_grad(f, params);
  (void)value;

  GradReport rep;
  std::vector<Tensor> work = params;
  int64_t flat = 0;
  for (size_t pi = 0; pi < work.size(); ++pi) {
    for (int64_t i = 0; i < work[pi].numel(); ++i, ++flat) {
      double orig = work[pi][i];
      work[pi][i] = orig + eps;
      double fp = eval_only(f, work);
      work[pi][i] = orig - eps;
      double fm = eval_only(f, work);
      work[pi][i] = orig;
      double fd = (fp - fm) / (2.0 * eps);
      double an = grads[pi][i];
      double abs_err = std::abs(an - fd);
      if (abs_err > rep.max_abs_err) rep.max_abs_err = abs_err;
      double denom = std::abs(an) + std::abs(fd);
      if (denom > denom_floor) {
        ++rep.n_checked;
        double rel = abs_err / denom;
        if (rel > rep.max_rel_err) {
          rep.max_rel_err = rel;
          rep.worst_index = flat;
        }
      }
    }
  }
  return rep;
}

}  // namespace primflow::ad
