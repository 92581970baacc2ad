#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cvir::nn {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> m, v;  // adam moments, lazily sized on first step
  std::uint64_t step = 0;

  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::sgd;
    s.learning_rate = lr;
    return s;
  }
  static OptimizerState adam(double lr = 1e-3) {
    OptimizerState s;
    s.learning_rate = lr;
    return s;
  }
};

/// One update. SGD: p -= lr * g. Adam: bias-corrected moments. The update is
/// computed in 64-bit and rounded into the 32-bit parameters. Throws
/// ShapeError when sizes disagree with each other or with existing moments.
void optimizer_step(OptimizerState& state, std::span<float> params, std::span<const double> grads);

/// Keras-style reduce-on-plateau: after `patience` epochs without a new best
/// value the learning rate is multiplied by `factor`.
class PlateauDecay {
 public:
  PlateauDecay(std::size_t patience, double factor) : patience_(patience), factor_(factor) {}

  /// Returns true when the learning rate was reduced.
  bool observe(double value, OptimizerState& state);

 private:
  std::size_t patience_;
  double factor_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t wait_ = 0;
};

}  // namespace cvir::nn
