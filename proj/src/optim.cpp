#include "advlab/optim.hpp"

#include <stdexcept>

namespace advlab {

bool sgd_step(ParamMap& params, const ParamMap& grads, double lr, double momentum, SgdState& state) {
    if (lr < 0) throw std::invalid_argument("sgd_step: negative learning rate");
    if (momentum < 0 || momentum >= 1) throw std::invalid_argument("sgd_step: momentum must be in [0,1)");
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw std::invalid_argument("sgd_step: gradient for unknown parameter " + name);
        if (!it->second.same_shape(g)) throw std::invalid_argument("sgd_step: shape mismatch for " + name);
        if (!g.all_finite()) {
            ++state.rejected_steps;
            return false;
        }
    }
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        auto [vit, fresh] = state.velocity.try_emplace(name, Tensor::zeros(g.shape()));
        Tensor& v = vit->second;
        if (!fresh && !v.same_shape(g)) throw std::invalid_argument("sgd_step: velocity shape mismatch for " + name);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            v[i] = momentum * v[i] + g[i];
            p[i] -= lr * v[i];
        }
    }
    return true;
}

}  // namespace advlab
