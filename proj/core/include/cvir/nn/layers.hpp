#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvir/nn/kernels.hpp"

namespace cvir::nn {

/// Feature-map shape in HWC order. Vectors are {1, 1, n}.
struct Shape3 {
  std::size_t h = 1, w = 1, c = 1;

  std::size_t size() const { return h * w * c; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

enum class LayerKind {
  dense,
  conv2d,
  activation,
  residual_unit_identity,
  residual_unit_projection,
  global_avg_pool,
  flatten,
  sigmoid,
};

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view text);

/// Declarative description of one layer.
///
/// `units` is the output width: neurons for dense, filters for conv2d and the
/// residual units. Residual units always use 3x3 kernels; the projection unit
/// downsamples by `stride` on both its main path and its 1x1 shortcut.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t units = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  Padding padding = Padding::same;
  Activation activation = Activation::relu;

  static LayerSpec dense(std::size_t units);
  static LayerSpec conv2d(std::size_t filters, std::size_t kernel, std::size_t stride = 1,
                          Padding padding = Padding::same);
  static LayerSpec act(Activation a);
  static LayerSpec residual_identity(std::size_t filters, Activation a);
  static LayerSpec residual_projection(std::size_t filters, std::size_t stride, Activation a);
  static LayerSpec global_avg_pool();
  static LayerSpec flatten();
  static LayerSpec sigmoid();

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

nlohmann::ordered_json to_json(const LayerSpec& spec);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

/// Intermediate buffers a layer keeps from forward for its backward pass.
struct LayerCache {
  std::vector<std::vector<double>> buffers;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual Shape3 input_shape() const = 0;
  virtual Shape3 output_shape() const = 0;
  virtual std::size_t param_count() const { return 0; }

  /// He-uniform weights (fan-in scaling), zero biases.
  virtual void init(std::span<float> params, std::mt19937_64& rng) const;

  virtual void forward(std::span<const double> params, std::span<const double> x, LayerCache& cache,
                       std::span<double> y) const = 0;

  /// Writes dx unless it is empty; accumulates into dparams.
  virtual void backward(std::span<const double> params, std::span<const double> x,
                        const LayerCache& cache, std::span<const double> dy, std::span<double> dx,
                        std::span<double> dparams) const = 0;
};

/// Builds the layer for `spec` on an input of shape `in`. Throws ShapeError
/// when the spec cannot apply to that shape.
std::unique_ptr<const Layer> make_layer(const LayerSpec& spec, Shape3 in);

}  // namespace cvir::nn
