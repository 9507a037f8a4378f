#pragma once

#include "earlyrec/params.hpp"

#include <vector>

namespace earlyrec {

struct SgdConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 1e-3;

    void validate() const;
};

/// Momentum buffers, one per parameter tensor. Sized lazily on the first update.
struct OptimizerState {
    std::vector<std::vector<double>> velocity;
};

/// Per tensor: g += weight_decay * theta (weights only); v = momentum * v + g; theta -= lr * v.
/// Throws InvalidInput when grads or state do not match params in count or shape.
void sgd_update(const ParamList& params, const ParamList& grads, OptimizerState& state,
                const SgdConfig& cfg);

} // namespace earlyrec
