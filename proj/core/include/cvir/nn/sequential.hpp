#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "cvir/nn/layers.hpp"

namespace cvir::nn {

/// Activations recorded by Sequential::forward for the matching backward.
/// Reusable across calls to avoid reallocation.
class Tape {
 public:
  std::span<const double> output() const { return acts_.back(); }

 private:
  friend class Sequential;
  std::vector<std::vector<double>> acts_;
  std::vector<LayerCache> caches_;
};

/// A linear stack of layers over a flat parameter vector laid out in
/// declaration order. Parameters are owned by the caller: stored as 32-bit,
/// widened to 64-bit for compute.
///
/// A trailing sigmoid layer is treated as the output nonlinearity:
/// forward() stops before it and returns logits so the loss can fuse it
/// with binary cross-entropy; predict() applies it.
class Sequential {
 public:
  Sequential() = default;
  Sequential(Shape3 input, std::vector<LayerSpec> specs);

  Shape3 input_shape() const { return input_; }
  /// Shape of forward()'s output (before a trailing sigmoid).
  Shape3 output_shape() const;
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  std::size_t param_count() const { return total_params_; }
  std::size_t param_offset(std::size_t layer) const { return offsets_[layer]; }
  bool ends_with_sigmoid() const { return trailing_sigmoid_; }

  std::vector<float> init_params(std::uint64_t seed) const;

  std::span<const double> forward(std::span<const double> params, std::span<const double> input,
                                  Tape& tape) const;

  /// Backpropagates `dout` (gradient of the loss w.r.t. forward()'s output).
  /// Accumulates into `grads`; writes the input gradient when `dinput` is
  /// non-empty.
  void backward(std::span<const double> params, Tape& tape, std::span<const double> dout,
                std::span<double> grads, std::span<double> dinput = {}) const;

  /// Forward plus the trailing sigmoid (if any).
  std::vector<double> predict(std::span<const double> params, std::span<const double> input,
                              Tape& tape) const;

 private:
  std::size_t compute_layers() const { return trailing_sigmoid_ ? layers_.size() - 1 : layers_.size(); }

  Shape3 input_;
  std::vector<LayerSpec> specs_;
  std::vector<std::shared_ptr<const Layer>> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t total_params_ = 0;
  bool trailing_sigmoid_ = false;
};

std::vector<double> widen(std::span<const float> values);

/// Loss used by gradient checking and generic training: fused sigmoid+BCE
/// against targets[0] when the model ends with a sigmoid, otherwise
/// 0.5 * sum (y - t)^2. Writes d(loss)/d(output) into `dout` when non-empty.
double model_loss(const Sequential& model, std::span<const double> output,
                  std::span<const double> targets, std::span<double> dout = {});

}  // namespace cvir::nn
