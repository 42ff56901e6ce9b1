#pragma once

#include <string>
#include <vector>

#include "primflow/gradcheck.hpp"
#include "primflow/trainer.hpp"

namespace testfix {

using namespace primflow;

inline train::TrainConfig tiny_config() {
  train::TrainConfig cfg;
  cfg.C = 2;
  cfg.L = 16;
  cfg.M = 3;
  cfg.K = 6;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.obs = 0;
  return cfg;
}

/// Model with every parameter randomized (including the zero-initialized
/// projections) so gradients reach all blocks during checks.
inline train::Model random_model(const train::TrainConfig& cfg, uint64_t seed,
                                 const std::vector<std::string>& vocab = {}) {
  Rng rng(seed);
  train::Model m = train::init_model(cfg, vocab, rng);
  for (auto& [name, t] : m.params.items) {
    bool zeroed = name.find("out_w") != std::string::npos ||
                  name.find("out_b") != std::string::npos ||
                  name.find("ada_") != std::string::npos ||
                  name.find("gamma") != std::string::npos;
    if (zeroed)
      for (double& x : t.data) x = 0.1 * rng.normal();
  }
  return m;
}

inline train::TrainSample random_sample(const train::TrainConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  return train::TrainSample{rng.normal_tensor({cfg.C, cfg.L}, 1.0), -1};
}

inline Tensor random_logits(const train::TrainConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  return rng.normal_tensor({cfg.M, cfg.L}, 1.0);
}

enum class Term { Rec, Sparse, Prim, Geo, Fm, Total };

/// Flattened (names, tensors) view of model params plus the per-sample
/// logits, for use with grad_check.
struct FlatParams {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
};

inline FlatParams flatten(const train::Model& m, const Tensor& logits) {
  FlatParams fp;
  for (const auto& [name, t] : m.params.items) {
    fp.names.push_back(name);
    fp.tensors.push_back(t);
  }
  fp.names.push_back("__logits__");
  fp.tensors.push_back(logits);
  return fp;
}

/// Relaxed-path evaluation of one term of the joint objective; every
/// discretization runs its smooth surrogate so central differences apply.
inline ad::ScalarFn joint_term_fn(train::TrainConfig cfg, std::vector<std::string> names,
                                  train::TrainSample sample, uint64_t rng_seed, Term term) {
  return [cfg, names, sample, rng_seed, term](ad::Tape& tape,
                                              const std::vector<ad::Val>& leaves) -> ad::Val {
    LeafMap lm;
    ad::Val logits{};
    for (size_t i = 0; i < names.size(); ++i) {
      if (names[i] == "__logits__")
        logits = leaves[i];
      else
        lm.items.emplace_back(names[i], leaves[i]);
    }
    Rng rng(rng_seed);
    auto jl = train::joint_loss(tape, lm, logits, sample, cfg, rng, dict::EvalMode::Relaxed);
    switch (term) {
      case Term::Rec: return jl.dec_terms.rec;
      case Term::Sparse: return jl.dec_terms.sparse;
      case Term::Prim: return jl.dec_terms.prim;
      case Term::Geo: return jl.dec_terms.geo;
      case Term::Fm: return jl.fm;
      case Term::Total: return jl.total;
    }
    return jl.total;
  };
}

}  // namespace testfix
