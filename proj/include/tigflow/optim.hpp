#pragma once

#include <cstdint>

#include "tigflow/params.hpp"

namespace tigflow {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, scaled by the learning rate
  double grad_clip = 0.0;     // global L2 norm cap; 0 disables

  void validate() const;
};

struct AdamWState {
  ParamSet m;
  ParamSet v;
  std::int64_t step = 0;

  static AdamWState init(const ParamSet& params);
};

// One bias-corrected AdamW update. Returns the gradient norm before clipping.
double adamw_step(ParamSet& params, const ParamSet& grads, AdamWState& state, const AdamWConfig& cfg);

[[nodiscard]] double global_norm(const ParamSet& grads);

}  // namespace tigflow
