#pragma once

#include <optional>
#include <vector>

#include "primflow/params.hpp"
#include "primflow/tape.hpp"

namespace primflow::flow {

/// One point on the straight noise-to-placement path.
struct FlowState {
  Tensor Z0;
  double t = 0;
  Tensor Zt;
  Tensor target_vel;  // R1 - Z0, independent of t
  double sigma = 1.0;
};

FlowState interpolate(const Tensor& Z0, const Tensor& R1, double t, double sigma = 1.0);

/// One-shot clean-endpoint estimate Zt + (1-t) v; degenerates to Zt at t=1.
Tensor endpoint_estimate(const Tensor& Zt, double t, const Tensor& v);

/// v_uncond + g (v_cond - v_uncond).
Tensor cfg_combine(const Tensor& v_cond, const Tensor& v_uncond, double g);

/// Entry 1 iff value >= threshold.
Tensor binarize(const Tensor& Z1, double threshold = 0.5);

/// Velocity-field architecture. tokens = dictionary size M (or C channels
/// for the dense variant); every token carries an L-vector.
struct NetConfig {
  int tokens = 8;
  int L = 32;
  int d = 64;
  int heads = 4;
  int blocks = 3;
  int n_tasks = 0;  // size of the task-label embedding table (0 = none)
  int C = 2;        // context-encoder input channels
};

/// Adds all "net.*", "enc.*" and "null_ctx" tensors to the store. The output
/// projection and the per-block modulation maps start at zero.
void init_net_params(ParamStore& store, const NetConfig& cfg, Rng& rng);

/// Token j starts as Linear(Zt row j) + psi(w_j) + MLP(t), then runs through
/// pre-norm self-attention blocks with modulation from the context vector h,
/// and projects back to an L-vector per token. Tokens carry no positional
/// identity, so rows permute with (Zt, w).
ad::Val velocity_forward(ad::Tape& t, const LeafMap& p, const NetConfig& cfg, ad::Val Zt,
                         double time, ad::Val wsoft, ad::Val h);

/// Deterministic prefix summary: per-timestep linear + positional encoding,
/// mean-pooled, plus a task embedding when task_id >= 0.
ad::Val encode_context_node(ad::Tape& t, const LeafMap& p, const NetConfig& cfg,
                            const Tensor& prefix, int task_id);

ad::Val null_context_node(ad::Tape& t, const LeafMap& p);

/// Plain-tensor encoder (no gradients).
Tensor encode_context(const ParamStore& store, const NetConfig& cfg, const Tensor& prefix,
                      int task_id);

struct Sampler {
  const ParamStore* params = nullptr;
  NetConfig cfg;
  std::vector<double> wsoft;  // current soft widths, one per token
};

/// Explicit Euler from t=0 to t=1 on a uniform grid. Throws on a non-finite
/// state naming the step.
using FieldFn = std::function<Tensor(const Tensor& Z, double t)>;
Tensor integrate_field(const FieldFn& field, const Tensor& Z0, int steps);

/// Euler transport under the trained field. h_cond null means the learned
/// null context; guidance g applies per step when a condition is present.
Tensor integrate(const Sampler& s, const Tensor& Z0, int steps, const Tensor* h_cond, double g);

}  // namespace primflow::flow
