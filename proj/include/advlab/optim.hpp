#pragma once

#include <map>
#include <string>

#include "advlab/tensor.hpp"

namespace advlab {

using ParamMap = std::map<std::string, Tensor>;

struct SgdState {
    ParamMap velocity;
    int rejected_steps = 0;
};

// One SGD+momentum update: v <- momentum*v + g, p <- p - lr*v.
// A non-finite gradient anywhere rejects the whole step (params and velocity
// untouched, state.rejected_steps bumped) and returns false.
bool sgd_step(ParamMap& params, const ParamMap& grads, double lr, double momentum, SgdState& state);

}  // namespace advlab
