#pragma once

#include "stedq/tensor.hpp"

namespace stedq {

/// Classical momentum SGD state:
///   v <- momentum * v + g
///   w <- w - learning_rate * v
struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  ParameterMap velocity;  // zero-initialized per parameter on first use
};

/// Validates hyperparameters and allocates zero velocities matching `params`.
OptimizerState make_optimizer_state(const ParameterMap& params, double learning_rate, double momentum);

/// In-place update of every parameter in `params`; each needs a same-shaped entry in `grads`.
void sgd_momentum_step(ParameterMap& params, const ParameterMap& grads, OptimizerState& state);

}  // namespace stedq
