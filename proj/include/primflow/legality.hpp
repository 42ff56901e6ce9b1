#pragma once

#include <vector>

#include "primflow/dictionary.hpp"
#include "primflow/tape.hpp"

namespace primflow::legal {

using dict::EvalMode;

/// A realized placement: one entry of R above the event threshold, with its
/// derived interval and the spatial endpoints of its (masked) atom.
struct Event {
  int atom = 0;
  int onset = 0;
  double p = 1.0;
  int offset = 0;                // onset + integer width
  std::vector<double> start;     // masked atom column 0
  std::vector<double> end;       // masked atom column width-1
};

struct EnergyBreakdown {
  double rec = 0, sparse = 0, prim = 0, geo = 0;
  double total = 0;
};

struct GeoParams {
  double eta = 0.1;   // temporal-gap weight
  double rho = 1.0;   // overlap weight
  double tau = 0.1;   // continuity temperature
  double lambda_s = 0.1, lambda_p = 0.1, lambda_g = 1.0;
  // surrogate constants (App-style substitutes, exercised by agreement tests)
  double smooth_delta = 1e-3;  // |z| ~ sqrt(z^2+delta^2) - delta
  double beta_ovl = 20.0;      // max(0,z) ~ softplus(beta z)/beta
  double vacancy_cutoff = 0.0; // >0 truncates negligible far pairs (training only)
};

/// Events of R (entries > dict::kEventEps), sorted by onset then atom index.
std::vector<Event> extract_events(const Tensor& R, const std::vector<int>& widths,
                                  const Tensor& masked_atoms);

/// Hard interval intersection length of two events.
double overlap(const Event& a, const Event& b);
/// Smooth surrogate on soft widths: softplus(beta z)/beta of the signed
/// intersection length. Agrees with the hard value within ~1/beta when soft
/// widths sit on integers.
double overlap_soft(int onset_a, double w_a, int onset_b, double w_b, double beta);

/// Pairwise compatibility cost; a must not start after b.
double pair_cost(const Event& a, const Event& b, const GeoParams& gp,
                 EvalMode mode = EvalMode::Hard, double wsoft_a = -1.0, double wsoft_b = -1.0);

/// Vacancy-weighted sum of pairwise costs over onset-ordered events.
double psi_geo(const Tensor& R, const std::vector<int>& widths, const Tensor& masked_atoms,
               const std::vector<double>& wsoft, const GeoParams& gp,
               EvalMode mode = EvalMode::Hard);

/// Direct triple-nested reference evaluation; refuses more than 12 events.
double psi_geo_bruteforce(const Tensor& R, const std::vector<int>& widths,
                          const Tensor& masked_atoms, const std::vector<double>& wsoft,
                          const GeoParams& gp, EvalMode mode = EvalMode::Hard);

/// Ownership-change penalty weighted by kinematic continuity of x. Hard mode
/// scores the exact L1 change with a smooth-|.| backward; Relaxed mode uses
/// the smooth surrogate as the value itself.
double psi_prim(const Tensor& gate, const Tensor& x, double tau,
                EvalMode mode = EvalMode::Hard);

/// Full legality energy on plain tensors (no gradients).
EnergyBreakdown psi_total(const Tensor& R, const Tensor& gate, const Tensor& x,
                          const Tensor& masked_atoms, const std::vector<int>& widths,
                          const std::vector<double>& wsoft, const GeoParams& gp,
                          EvalMode mode = EvalMode::Hard);

// ---- tape nodes ----

ad::Val psi_geo_node(ad::Tape& t, ad::Val R, ad::Val masked, ad::Val wsoft,
                     const std::vector<int>& widths, const GeoParams& gp, EvalMode mode);

ad::Val psi_prim_node(ad::Tape& t, ad::Val gate, const Tensor& x, double tau, EvalMode mode);

struct EnergyResult {
  ad::Val total;
  ad::Val rec, sparse, prim, geo;  // component nodes, usable as grad-check roots
  EnergyBreakdown value;
};

/// rec + lambda_s*sparse + lambda_p*prim + lambda_g*geo on the tape. R must
/// already hold values in [0,1] (clamp relaxed inputs upstream).
EnergyResult psi_total_node(ad::Tape& t, ad::Val R, ad::Val gate, ad::Val masked, ad::Val wsoft,
                            const std::vector<int>& widths, const Tensor& x, const GeoParams& gp,
                            EvalMode mode);

}  // namespace primflow::legal
