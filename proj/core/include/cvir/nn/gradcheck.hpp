#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cvir/nn/sequential.hpp"

namespace cvir::nn {

/// |a - n| / max(|a|, |n|); 0 when both magnitudes are below `floor`
/// (so 0/0 counts as agreement).
double relative_error(double analytic, double numeric, double floor = 1e-10);

struct GradCheckOptions {
  double step = 1e-3;
  /// Coordinates sampled per layer (all of them when the layer has fewer).
  std::size_t samples_per_layer = 100;
  /// Also check d(loss)/d(input) on this many input coordinates.
  std::size_t input_samples = 100;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<double> per_layer;  // max error per layer (0 for parameter-free layers)
  double input_error = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares backprop gradients of model_loss with central finite differences.
/// Both paths run in 64-bit on a widened copy of `params`.
GradCheckReport gradient_check(const Sequential& model, std::span<const float> params,
                               std::span<const double> input, std::span<const double> targets,
                               const GradCheckOptions& options = {});

}  // namespace cvir::nn
