#pragma once

// Raw 64-bit compute kernels shared by the Tensor-level ops and the layer
// stack. Layouts: feature maps are HWC row-major, conv kernels are
// [k][k][in_c][out_c], dense weights are [out][in].

#include <cstddef>
#include <span>
#include <string_view>

namespace cvir::nn {

enum class Padding { same, valid };
enum class Activation { relu, leaky_relu, elu };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kEluAlpha = 1.0;

std::string_view to_string(Activation act);
std::string_view to_string(Padding pad);
/// Accepts "relu", "leaky_relu"/"leaky-relu", "elu".
Activation parse_activation(std::string_view text);
Padding parse_padding(std::string_view text);

struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t out_c = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  Padding padding = Padding::same;

  std::size_t out_h() const;
  std::size_t out_w() const;
  /// Same padding puts the odd extra cell on the bottom/right.
  std::size_t pad_top() const;
  std::size_t pad_left() const;
  std::size_t weight_count() const { return kernel * kernel * in_c * out_c; }
  std::size_t in_size() const { return in_h * in_w * in_c; }
  std::size_t out_size() const { return out_h() * out_w() * out_c; }
};

/// Throws ShapeError unless kernel is 1 or 3 and stride is 1 or 2.
void validate(const ConvGeometry& g);

/// y = cross_correlate(x, w) + b. `b` may be empty.
void conv2d_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    const ConvGeometry& g, std::span<double> y);

/// Overwrites dx (skipped when empty); accumulates into dw and db (db may be empty).
void conv2d_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, const ConvGeometry& g, std::span<double> dx,
                     std::span<double> dw, std::span<double> db);

/// y = W x + b with W of shape [out][x.size()]. `b` may be empty.
void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y);

/// Overwrites dx (skipped when empty); accumulates into dw and db.
void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                    std::span<double> db);

double activate(double x, Activation act);
/// Derivative with respect to the pre-activation input.
double activate_grad(double x, Activation act);

void activation_forward(std::span<const double> x, Activation act, std::span<double> y);
void activation_backward(std::span<const double> x, std::span<const double> dy, Activation act,
                         std::span<double> dx);

double sigmoid(double z);
/// Numerically stable -[y ln s(z) + (1-y) ln(1-s(z))].
double bce_with_logits(double z, double y);
/// s(z) - y.
double bce_with_logits_grad(double z, double y);

}  // namespace cvir::nn
