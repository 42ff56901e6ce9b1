#pragma once

#include <vector>

#include "primflow/tape.hpp"

namespace primflow::dict {

/// Entries of a placement matrix below this threshold are not events.
inline constexpr double kEventEps = 1e-6;

/// Forward discretization style. Hard is the straight-through training path
/// (sampled binaries, rounded widths, one-hot gate); Relaxed replaces every
/// discretization with its smooth surrogate so finite differences match the
/// analytic gradients exactly.
enum class EvalMode { Hard, Relaxed };

struct Atom {
  Tensor content;         // C x K
  double width_param = 0; // phi
  double gate_priority = 0;  // gamma
};

struct EffectiveAtom {
  Tensor masked;             // C x K, content * mask
  double soft_w = 0;         // in (1, K)
  int int_w = 1;             // straight-through round of soft_w
  std::vector<double> mask;  // K entries, strictly decreasing
};

struct PlacementState {
  Tensor logits;  // M x L
  Tensor probs;   // q = sigmoid(logits)
  Tensor binary;  // sampled multi-hot
  Tensor gate;    // winner-take-all ownership (filled by wta_gate)
};

double soft_width(double phi, int K);
std::vector<double> length_mask(double w, int K, double alpha);
int round_width(double w);  // half-up ties
EffectiveAtom effective_atom(const Atom& a, double alpha);

/// q = sigmoid(logits); binary sampled Bernoulli(q). Gate left empty.
PlacementState sample_placements(const Tensor& logits, Rng& rng);

/// Hard per-timestep ownership. Among events covering a timestep the winner
/// maximizes P + gamma[atom]; ties go to the lowest atom index, then the
/// earliest onset. Uncovered timesteps get an all-zero column.
Tensor wta_gate(const Tensor& R, const std::vector<int>& widths, const std::vector<double>& gamma);

/// Compositional synthesis: onset k of atom j copies masked columns
/// 0..w-1 onto timeline columns k..k+w-1 (clipped at L), superposed and then
/// gated per timestep.
Tensor synthesize(const std::vector<Tensor>& masked_atoms, const std::vector<int>& widths,
                  const Tensor& R, const Tensor& gate);
Tensor synthesize(const Tensor& masked_atoms /* M x C x K */, const std::vector<int>& widths,
                  const Tensor& R, const Tensor& gate);

// ---- tape builders (training path) ----

struct BuiltAtoms {
  ad::Val wsoft;           // (M), soft widths; constant K when masking is off
  ad::Val masked;          // (M, C, K)
  std::vector<int> widths; // straight-through integer widths
};

/// content (M,C,K), phi (M). use_mask=false freezes widths at K and leaves
/// content unmasked (the "w/o Mask" ablation).
BuiltAtoms build_effective_atoms(ad::Tape& t, ad::Val content, ad::Val phi, double alpha,
                                 bool use_mask);

/// Gate over the events of R (entries > kEventEps). Hard mode emits the
/// one-hot gate with a straight-through softmax backward; Relaxed emits the
/// softmax itself.
ad::Val wta_gate_node(ad::Tape& t, ad::Val R, ad::Val gamma, const std::vector<int>& widths,
                      EvalMode mode);

ad::Val synthesize_node(ad::Tape& t, ad::Val masked, ad::Val R, ad::Val gate,
                        const std::vector<int>& widths);

}  // namespace primflow::dict
