#pragma once

#include <vector>

#include "primflow/tensor.hpp"

namespace primflow::metrics {

struct MetricReport {
  double ade = 0;
  double fde = 0;
  double ratio = 0;
  bool ratio_defined = false;  // false when ade == 0
  int64_t n_samples = 0;
};

/// Mean over timesteps of the Euclidean distance between columns.
double ade(const Tensor& pred, const Tensor& gt);
/// Euclidean distance between the final columns.
double fde(const Tensor& pred, const Tensor& gt);

/// Aggregates per-sample ADE/FDE means; ratio = fde/ade of the aggregates.
MetricReport evaluate(const std::vector<std::pair<Tensor, Tensor>>& pred_gt);

/// Axis-aligned histogram grid over per-timestep positions and per-step
/// displacements, bins_per_axis cells per channel on each of the two blocks.
struct BinSpec {
  int bins_per_axis = 32;
  std::vector<double> pos_lo, pos_hi;    // per channel
  std::vector<double> disp_lo, disp_hi;  // per channel
};

struct JsdReport {
  double jsd_bits = 0;  // base-2, in [0,1]
  BinSpec bins;
  int64_t n_generated = 0;
  int64_t n_real = 0;
};

/// Grid spanning the 1st-99th percentile of the reference set per channel.
/// Channels beyond 3 reduce the per-axis bin count to keep the grid bounded.
BinSpec default_bins(const std::vector<Tensor>& reference, int bins_per_axis = 32);

/// Base-2 Jensen-Shannon divergence between the binned feature distributions
/// of the two sets, with add-epsilon smoothing (1e-10 per cell). Symmetric in
/// the two sets for a fixed BinSpec.
JsdReport jsd(const std::vector<Tensor>& generated, const std::vector<Tensor>& real,
              const BinSpec& bins);

}  // namespace primflow::metrics
