#pragma once

#include <string>

#include "primflow/trainer.hpp"

namespace primflow::train {

/// Versioned training snapshot: a text header (magic, config, tensor table)
/// followed by raw little-endian float64 payloads. Save/load is bit-exact.
struct Checkpoint {
  int version = 1;
  TrainConfig cfg;
  std::vector<std::string> task_vocab;
  std::string rng_state;  // empty when not tracked
  int64_t step = 0;
  ParamStore tensors;
};

Checkpoint make_checkpoint(const TrainResult& result, const std::string& rng_state = "");

Model model_from_checkpoint(const Checkpoint& ckpt);
TrainResult result_from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace primflow::train
