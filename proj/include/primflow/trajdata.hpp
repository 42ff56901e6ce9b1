#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "primflow/tensor.hpp"

namespace primflow::data {

/// A C-channel, T-timestep motion sequence with unit timestep.
struct Trajectory {
  std::string id;
  std::string task;
  Tensor points;  // C x T
  int64_t channels() const { return points.dim(0); }
  int64_t length() const { return points.dim(1); }
};

/// One observed/future split cut out of a source trajectory.
struct WindowSample {
  Tensor observed;  // C x T_obs
  Tensor future;    // C x (T_total - T_obs)
  std::string source_id;
  std::string task;
  int64_t offset = 0;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> clamped;  // std was ~0 and clamped to 1
};

struct SynthSpec {
  int M_true = 4;
  int C = 2;
  int L = 32;
  int K = 10;
  double noise_std = 0.01;
  int n_trajectories = 1000;
  uint64_t seed = 0;
  // 0: every trajectory is an independent random tiling. >0: that many task
  // templates, each a fixed primitive sequence; trajectories draw a task and
  // realize its template plus noise.
  int n_tasks = 0;
};

struct SynthEvent {
  int atom = 0;
  int onset = 0;
  int length = 0;  // realized length; < atom length only for a truncated tail
};

struct SynthTruth {
  std::vector<Tensor> atoms;                       // C x k_j, k_j <= K
  std::vector<std::vector<SynthEvent>> events;     // per trajectory, onset-sorted
  std::vector<int> task_of;                        // per trajectory (-1 when untasked)
};

enum class FileFormat { Csv, Jsonl };

FileFormat format_from_path(const std::string& path);

std::vector<Trajectory> load_trajectories(const std::string& path, FileFormat format);
void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path,
                       FileFormat format);

/// Non-overlapping by default (stride = total), per the sliding-window
/// evaluation protocol; smaller strides are allowed for augmentation.
std::vector<WindowSample> window(const std::vector<Trajectory>& dataset, int total, int obs,
                                 int stride);

NormStats compute_norm_stats(const std::vector<Trajectory>& dataset);
Tensor normalize_points(const Tensor& points, const NormStats& stats);
Tensor denormalize_points(const Tensor& points, const NormStats& stats);
std::vector<Trajectory> normalize(const std::vector<Trajectory>& dataset, const NormStats& stats);

std::pair<std::vector<Trajectory>, SynthTruth> synth_generate(const SynthSpec& spec);

void save_truth(const SynthTruth& truth, const std::string& path);
SynthTruth load_truth(const std::string& path);

}  // namespace primflow::data
