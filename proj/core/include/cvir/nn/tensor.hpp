#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "cvir/nn/kernels.hpp"

namespace cvir::nn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of 32-bit floats.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Row-major multi-index access; throws ShapeError on rank/bounds mismatch.
  float& at(std::initializer_list<std::size_t> index);
  float at(std::initializer_list<std::size_t> index) const;

  /// Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  std::vector<double> to_double() const;
  static Tensor from_double(Shape shape, std::span<const double> values);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<float> data_;
};

// Tensor-level operations. Inputs are 32-bit; every reduction runs in 64-bit.

/// y = W x + b for x [n], W [m, n], b [m].
Tensor dense_forward(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor dx, dweights, dbias;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& dy);

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::same;
};

/// x [H, W, Cin], kernels [k, k, Cin, Cout] with k in {1, 3}.
Tensor conv2d_forward(const Tensor& x, const Tensor& kernels, const Conv2dOptions& options = {});
Tensor conv2d_forward(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                      const Conv2dOptions& options = {});

struct Conv2dGrads {
  Tensor dx, dkernels, dbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dy,
                            const Conv2dOptions& options = {});

Tensor activation_forward(const Tensor& x, Activation act);
Tensor activation_backward(const Tensor& x, const Tensor& dy, Activation act);

/// -[y ln p + (1-y) ln(1-p)] for a probability p in (0,1).
double bce_loss(double p, int y);

}  // namespace cvir::nn
