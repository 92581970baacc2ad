#include "cvir/nn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "cvir/error.hpp"

namespace cvir::nn {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_dense_input(const Tensor& x, const Tensor& weights) {
  if (x.shape() != Shape{weights.shape()[1]}) {
    throw ShapeError("dense input: weights " + shape_string(weights.shape()) + " need shape [" +
                     std::to_string(weights.shape()[1]) + "], got " + shape_string(x.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(t.shape()));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  for (auto s : shape_)
    if (s == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto s : shape_)
    if (s == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape_));
  if (element_count(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " needs " +
                     std::to_string(element_count(shape_)) + " values, got " + std::to_string(data_.size()));
  }
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index rank does not match " + shape_string(shape_));
  std::size_t off = 0, d = 0;
  for (auto i : index) {
    if (i >= shape_[d]) throw ShapeError("index out of bounds for " + shape_string(shape_));
    off = off * shape_[d] + i;
    ++d;
  }
  return off;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
float Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

std::vector<double> Tensor::to_double() const { return {data_.begin(), data_.end()}; }

Tensor Tensor::from_double(Shape shape, std::span<const double> values) {
  std::vector<float> data(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) data[i] = static_cast<float>(values[i]);
  return Tensor(std::move(shape), std::move(data));
}

// --- ops ---------------------------------------------------------------------------

Tensor dense_forward(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require_rank(x, 1, "dense input");
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.shape()[0];
  require_dense_input(x, weights);
  require_shape(bias, {m}, "dense bias");
  std::vector<double> y(m);
  dense_forward(x.to_double(), weights.to_double(), bias.to_double(), y);
  return Tensor::from_double({m}, y);
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& dy) {
  require_rank(weights, 2, "dense weights");
  const std::size_t m = weights.shape()[0], n = weights.shape()[1];
  require_dense_input(x, weights);
  require_shape(dy, {m}, "dense output gradient");
  std::vector<double> dx(n), dw(m * n, 0.0), db(m, 0.0);
  dense_backward(x.to_double(), weights.to_double(), dy.to_double(), dx, dw, db);
  return {Tensor::from_double({n}, dx), Tensor::from_double({m, n}, dw), Tensor::from_double({m}, db)};
}

namespace {

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernels, const Conv2dOptions& options) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const auto& ks = kernels.shape();
  if (ks[0] != ks[1]) throw ShapeError("conv2d kernels must be square, got " + shape_string(ks));
  if (ks[2] != x.shape()[2]) {
    throw ShapeError("conv2d kernels expect " + std::to_string(ks[2]) + " input channels, input is " +
                     shape_string(x.shape()));
  }
  ConvGeometry g{x.shape()[0], x.shape()[1], x.shape()[2], ks[3], ks[0], options.stride, options.padding};
  validate(g);
  return g;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& kernels, const Conv2dOptions& options) {
  const auto g = conv_geometry(x, kernels, options);
  std::vector<double> y(g.out_size());
  conv2d_forward(x.to_double(), kernels.to_double(), {}, g, y);
  return Tensor::from_double({g.out_h(), g.out_w(), g.out_c}, y);
}

Tensor conv2d_forward(const Tensor& x, const Tensor& kernels, const Tensor& bias,
                      const Conv2dOptions& options) {
  const auto g = conv_geometry(x, kernels, options);
  require_shape(bias, {g.out_c}, "conv2d bias");
  std::vector<double> y(g.out_size());
  conv2d_forward(x.to_double(), kernels.to_double(), bias.to_double(), g, y);
  return Tensor::from_double({g.out_h(), g.out_w(), g.out_c}, y);
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dy,
                            const Conv2dOptions& options) {
  const auto g = conv_geometry(x, kernels, options);
  require_shape(dy, {g.out_h(), g.out_w(), g.out_c}, "conv2d output gradient");
  std::vector<double> dx(g.in_size()), dw(g.weight_count(), 0.0), db(g.out_c, 0.0);
  conv2d_backward(x.to_double(), kernels.to_double(), dy.to_double(), g, dx, dw, db);
  return {Tensor::from_double(x.shape(), dx), Tensor::from_double(kernels.shape(), dw),
          Tensor::from_double({g.out_c}, db)};
}

Tensor activation_forward(const Tensor& x, Activation act) {
  std::vector<double> y(x.size());
  activation_forward(x.to_double(), act, y);
  return Tensor::from_double(x.shape(), y);
}

Tensor activation_backward(const Tensor& x, const Tensor& dy, Activation act) {
  require_shape(dy, x.shape(), "activation output gradient");
  std::vector<double> dx(x.size());
  activation_backward(x.to_double(), dy.to_double(), act, dx);
  return Tensor::from_double(x.shape(), dx);
}

double bce_loss(double p, int y) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("bce_loss expects a probability in (0,1)");
  return y == 1 ? -std::log(p) : -std::log1p(-p);
}

}  // namespace cvir::nn
