#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "primflow/flow.hpp"
#include "primflow/legality.hpp"
#include "primflow/params.hpp"
#include "primflow/trajdata.hpp"

namespace primflow::train {

struct TrainConfig {
  // timeline / data
  int C = 2;
  int L = 32;
  int obs = 0;  // 0: unconditional; >0: observed-prefix length
  // dictionary
  int M = 8;
  int K = 10;
  double alpha = 10.0;
  bool use_mask = true;        // off: "w/o Mask" ablation (widths pinned at K)
  bool dense_baseline = false; // on: "w/o Primitives" flow in trajectory space
  // legality weights
  double lambda_s = 0.1, lambda_p = 0.1, lambda_g = 1.0;
  double beta = 0.5, eta = 0.1, rho = 1.0, tau = 0.1;
  // flow
  double sigma = 1.0;
  int euler_steps = 50;
  double guidance = 1.5;
  double guidance_dropout = 0.1;
  // network
  int d_model = 64, heads = 4, blocks = 3;
  // optimization
  double lr_theta = 1e-3, lr_logits = 5e-3, lr_dict = 1e-3;
  int batch_size = 64, epochs = 50;
  uint64_t seed = 1;
  double init_logit = -4.0;
  int threads = 1;

  std::map<std::string, std::string> to_kv() const;
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
  void validate() const;
};

legal::GeoParams geo_params(const TrainConfig& cfg);

struct Model {
  TrainConfig cfg;
  ParamStore params;
  data::NormStats stats;
  std::vector<std::string> task_vocab;
  int64_t step = 0;

  flow::NetConfig net_config() const;
  int task_id(const std::string& task) const;  // -1 when unknown
  std::vector<int> widths() const;             // straight-through integer widths
  std::vector<double> soft_widths() const;
  Tensor masked_atoms() const;                 // M x C x K
};

Model init_model(const TrainConfig& cfg, const std::vector<std::string>& task_vocab, Rng& rng);

/// One normalized training element occupying the full timeline; for
/// conditional models columns [0, obs) are the observed prefix.
struct TrainSample {
  Tensor x;  // C x L
  int task_id = -1;
};

struct LossBreakdown {
  legal::EnergyBreakdown psi_dec;
  double fm_residual = 0;
  legal::EnergyBreakdown psi_flow;
  double total = 0;
};

struct JointLossResult {
  ad::Val total;
  ad::Val fm;                           // velocity-matching residual node
  legal::EnergyResult dec_terms;        // dictionary-side energy nodes
  legal::EnergyResult flow_terms;       // flow-side energy nodes
  LossBreakdown value;
};

/// The full objective for one sample: dictionary-side legality on the
/// sampled placement, the velocity-matching residual, and flow-side legality
/// on the one-shot endpoint. Per-sample randomness (Bernoulli draws, t, Z0,
/// context dropout) comes from rng in that fixed order.
JointLossResult joint_loss(ad::Tape& tape, const LeafMap& params, ad::Val logits,
                           const TrainSample& sample, const TrainConfig& cfg, Rng& rng,
                           dict::EvalMode mode);

struct EpochStats {
  int epoch = 0;
  double psi_dec = 0, fm_residual = 0, psi_flow = 0, total = 0;
  double utilization = 0;  // fraction of atoms with a confident onset somewhere
};

struct LogitTable {
  Tensor table;   // N x M x L
  Tensor adam_m;  // same shape
  Tensor adam_v;
  std::vector<int64_t> steps;  // per-sample update counts
};

struct TrainResult {
  Model model;
  LogitTable logits;
  ParamStore adam_m, adam_v;
  std::vector<EpochStats> log;
  bool diverged = false;
  std::string divergence_term;
};

TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& cfg,
                  const std::vector<std::string>& task_vocab);

struct Prediction {
  Tensor future;      // C x (L - obs), dataset units
  bool fallback = false;  // empty placement; constant extension returned
  Tensor placements;  // binarized M x L (empty for the dense variant)
  Tensor gate;
};

/// Conditional sampling: encode prefix, transport noise, binarize at 0.5,
/// gate, synthesize, slice the future and undo normalization.
Prediction predict(const Model& model, const Tensor& prefix_raw, const std::string& task,
                   int steps, double guidance, uint64_t seed);

/// Unconditional generation of a full timeline in dataset units.
Tensor sample_trajectory(const Model& model, int steps, Rng& rng);

/// Reconstruction diagnostic: optimize a fresh logit row for x with the
/// dictionary frozen. Not part of the prediction path.
Tensor infer_logits(const Model& model, const Tensor& x_norm, int opt_steps, double lr,
                    uint64_t seed);

}  // namespace primflow::train
