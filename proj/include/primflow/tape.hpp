#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "primflow/tensor.hpp"

namespace primflow::ad {

/// Handle to a node on a Tape.
struct Val {
  int32_t i = -1;
  bool ok() const { return i >= 0; }
};

/// Dynamic reverse-mode tape. A tape is built per evaluation; nodes store
/// their forward value and, after backward(), the gradient of the root
/// scalar with respect to them. Node creation order is the topological order.
class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Val leaf(Tensor v, const char* tag = "leaf");
  Val constant(Tensor v, const char* tag = "const") { return leaf(std::move(v), tag); }
  Val constant_scalar(double v) { return leaf(Tensor::scalar(v), "const"); }

  const Tensor& val(Val x) const { return nodes_[static_cast<size_t>(x.i)].v; }
  const Tensor& grad(Val x) const { return nodes_[static_cast<size_t>(x.i)].g; }
  Tensor& grad_mut(Val x) { return nodes_[static_cast<size_t>(x.i)].g; }
  const char* tag_of(Val x) const { return nodes_[static_cast<size_t>(x.i)].tag; }

  // elementwise
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);
  Val scale(Val a, double c);
  Val add_const(Val a, double c);
  Val neg(Val a) { return scale(a, -1.0); }
  Val sigmoid(Val a);
  Val exp_(Val a);
  Val softplus(Val a);
  Val sin_(Val a);
  Val cos_(Val a);
  Val clamp01(Val a);
  Val silu(Val a) { return mul(a, sigmoid(a)); }

  // reductions to a scalar (shape {1})
  Val sum(Val a);
  Val mean(Val a);
  Val sq_norm(Val a);

  // rank-2 linear algebra
  Val matmul(Val a, Val b);
  Val transpose(Val a);
  Val row_softmax(Val a);
  Val layer_norm(Val a, double eps = 1e-5);
  Val mul_rowvec(Val x, Val v);  // out[r,c] = x[r,c] * v[c]
  Val add_rowvec(Val x, Val v);  // out[r,c] = x[r,c] + v[c]
  Val mul_colvec(Val x, Val u);  // out[r,c] = x[r,c] * u[r]
  Val slice_cols(Val a, int64_t c0, int64_t n);
  Val slice_rows(Val a, int64_t r0, int64_t n);
  Val concat_cols(const std::vector<Val>& parts);
  Val reshape(Val a, std::vector<int64_t> shape);

  // gradient shaping
  Val stopgrad(Val a);
  /// Straight-through round: value = round-half-up(x), gradient = identity.
  Val st_round(Val a);
  /// Straight-through Bernoulli: value = Bernoulli(x) in {0,1}, gradient = identity.
  Val st_bernoulli(Val a, Rng& rng);
  /// Straight-through to an externally computed hard value; gradient = identity.
  Val st_to(Val soft, Tensor hard, const char* tag = "st_to");

  /// Custom node: caller supplies the forward value and a backward closure.
  Val make(Tensor out, Backward back, const char* tag);

  /// Reverse sweep from a scalar root. Resets all gradients first.
  void backward(Val root);

  size_t size() const { return nodes_.size(); }
  /// Index of the first node with a non-finite value, or -1.
  int32_t first_nonfinite() const;

 private:
  struct Node {
    Tensor v;
    Tensor g;
    const char* tag;
    Backward back;
  };
  // deque: references returned by val()/grad() stay valid as nodes are added
  std::deque<Node> nodes_;
  Val push(Tensor v, Backward b, const char* tag);
};

}  // namespace primflow::ad
