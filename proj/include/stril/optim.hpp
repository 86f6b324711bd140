#pragma once

#include <map>
#include <string>

#include "stril/tensor.hpp"

namespace stril {

// Named parameter bundle. std::map keeps iteration deterministic
// (sorted by name), which the checkpoint format and update order rely on.
using ParamStore = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

struct AdamState {
  ParamStore first_moment;
  ParamStore second_moment;
  long step_count = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState create(const ParamStore& params, double lr);
};

// One Adam update with bias correction, applied in place. Gradients must
// be keyed and shaped exactly like the parameters.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state);

// Grad accumulation helpers used by the training loops.
void accumulate_scaled(GradMap& acc, const GradMap& grads, double scale);
GradMap zeros_like(const ParamStore& params);

}  // namespace stril
