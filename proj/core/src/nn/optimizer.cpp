#include "cvir/nn/optimizer.hpp"

#include <cmath>
#include <string>

#include "cvir/error.hpp"

namespace cvir::nn {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

void optimizer_step(OptimizerState& state, std::span<float> params, std::span<const double> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  ++state.step;
  if (state.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i] = static_cast<float>(params[i] - state.learning_rate * grads[i]);
    return;
  }

  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("optimizer moments do not match the parameter count");

  const double b1 = state.beta1, b2 = state.beta2;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] = static_cast<float>(params[i] - state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
  }
}

bool PlateauDecay::observe(double value, OptimizerState& state) {
  if (!has_best_ || value < best_) {
    best_ = value;
    has_best_ = true;
    wait_ = 0;
    return false;
  }
  if (++wait_ >= patience_) {
    state.learning_rate *= factor_;
    wait_ = 0;
    return true;
  }
  return false;
}

}  // namespace cvir::nn
