#pragma once

#include <string>
#include <vector>

#include "primflow/metrics.hpp"
#include "primflow/trainer.hpp"

namespace primflow::ablation {

/// Windows -> normalized full-timeline samples, task vocabulary and stats.
struct PreparedData {
  std::vector<train::TrainSample> samples;
  std::vector<std::string> task_vocab;
  data::NormStats stats;
};

PreparedData prepare(const std::vector<data::WindowSample>& windows, const data::NormStats* stats);

struct FitResult {
  train::TrainResult result;
  metrics::MetricReport test;
};

/// Trains on the train windows and scores single-sample predictions on the
/// test windows (conditional models only).
FitResult fit_and_eval(const std::vector<data::WindowSample>& train_windows,
                       const std::vector<data::WindowSample>& test_windows,
                       train::TrainConfig cfg);

struct AblationVariants {
  std::vector<int> m_values;  // dictionary sizes to sweep (base M reported separately)
  bool no_mask = true;
  bool no_primitives = true;
};

struct AblationRow {
  std::string name;
  bool failed = false;
  std::vector<metrics::MetricReport> per_seed;
  double ade_median = 0, fde_median = 0, ratio_median = 0;
};

/// Trains every variant under the same windows and seeds; a diverged run
/// marks its row failed and the sweep continues.
std::vector<AblationRow> run_ablation(const std::vector<data::WindowSample>& train_windows,
                                      const std::vector<data::WindowSample>& test_windows,
                                      const train::TrainConfig& base,
                                      const AblationVariants& variants,
                                      const std::vector<uint64_t>& seeds);

}  // namespace primflow::ablation
