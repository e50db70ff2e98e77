#include "stedq/optimizer.hpp"

#include <stdexcept>

namespace stedq {

static void check_hyperparameters(double learning_rate, double momentum) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
}

OptimizerState make_optimizer_state(const ParameterMap& params, double learning_rate, double momentum) {
  check_hyperparameters(learning_rate, momentum);
  OptimizerState state{learning_rate, momentum, {}};
  for (const auto& [name, value] : params) state.velocity.emplace(name, Tensor(value.shape()));
  return state;
}

void sgd_momentum_step(ParameterMap& params, const ParameterMap& grads, OptimizerState& state) {
  check_hyperparameters(state.learning_rate, state.momentum);
  for (const auto& [name, value] : params) {
    const auto g = grads.find(name);
    if (g == grads.end()) throw ShapeError("sgd_momentum_step: no gradient for parameter '" + name + "'");
    if (g->second.shape() != value.shape())
      throw ShapeError("sgd_momentum_step: gradient for '" + name + "' has shape " +
                       to_string(g->second.shape()) + ", parameter has " + to_string(value.shape()));
    auto v = state.velocity.find(name);
    if (v == state.velocity.end()) v = state.velocity.emplace(name, Tensor(value.shape())).first;
    if (v->second.shape() != value.shape())
      throw ShapeError("sgd_momentum_step: velocity for '" + name + "' has the wrong shape");
  }
  for (auto& [name, value] : params) {
    const Tensor& g = grads.at(name);
    Tensor& v = state.velocity.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i];
      value[i] -= state.learning_rate * v[i];
    }
  }
}

}  // namespace stedq
