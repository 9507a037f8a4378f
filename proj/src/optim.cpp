#include "earlyrec/optim.hpp"

#include "earlyrec/error.hpp"

#include <cmath>
#include <string>

namespace earlyrec {

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidInput("learning_rate must be > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw InvalidInput("momentum must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw InvalidInput("weight_decay must be >= 0");
    }
}

void sgd_update(const ParamList& params, const ParamList& grads, OptimizerState& state,
                const SgdConfig& cfg) {
    if (params.size() != grads.size()) {
        throw InvalidInput("sgd_update: " + std::to_string(params.size()) + " parameter tensors but " +
                           std::to_string(grads.size()) + " gradients");
    }
    if (state.velocity.empty()) {
        for (const auto& p : params) {
            state.velocity.emplace_back(p.values.size(), 0.0);
        }
    }
    if (state.velocity.size() != params.size()) {
        throw InvalidInput("sgd_update: optimizer state holds " +
                           std::to_string(state.velocity.size()) + " tensors, expected " +
                           std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params[i].values;
        const auto g = grads[i].values;
        auto& v = state.velocity[i];
        if (g.size() != theta.size() || v.size() != theta.size()) {
            throw InvalidInput("sgd_update: shape mismatch for tensor '" + params[i].name + "'");
        }
        const double wd = params[i].decay ? cfg.weight_decay : 0.0;
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double grad = g[k] + wd * theta[k];
            v[k] = cfg.momentum * v[k] + grad;
            theta[k] -= cfg.learning_rate * v[k];
        }
    }
}

} // namespace earlyrec
