#include "cvir/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cvir/error.hpp"

namespace cvir::nn {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::elu: return "elu";
  }
  return "?";
}

std::string_view to_string(Padding pad) { return pad == Padding::same ? "same" : "valid"; }

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "leaky_relu" || text == "leaky-relu") return Activation::leaky_relu;
  if (text == "elu") return Activation::elu;
  throw InvalidArgument("unknown activation '" + std::string(text) + "' (expected relu|leaky-relu|elu)");
}

Padding parse_padding(std::string_view text) {
  if (text == "same") return Padding::same;
  if (text == "valid") return Padding::valid;
  throw InvalidArgument("unknown padding '" + std::string(text) + "'");
}

// --- geometry ---------------------------------------------------------------------

std::size_t ConvGeometry::out_h() const {
  if (padding == Padding::same) return (in_h + stride - 1) / stride;
  return in_h < kernel ? 0 : (in_h - kernel) / stride + 1;
}

std::size_t ConvGeometry::out_w() const {
  if (padding == Padding::same) return (in_w + stride - 1) / stride;
  return in_w < kernel ? 0 : (in_w - kernel) / stride + 1;
}

std::size_t ConvGeometry::pad_top() const {
  if (padding == Padding::valid) return 0;
  const std::size_t needed = (out_h() - 1) * stride + kernel;
  return needed > in_h ? (needed - in_h) / 2 : 0;
}

std::size_t ConvGeometry::pad_left() const {
  if (padding == Padding::valid) return 0;
  const std::size_t needed = (out_w() - 1) * stride + kernel;
  return needed > in_w ? (needed - in_w) / 2 : 0;
}

void validate(const ConvGeometry& g) {
  if (g.kernel != 1 && g.kernel != 3)
    throw ShapeError("conv kernel must be 1x1 or 3x3, got " + std::to_string(g.kernel));
  if (g.stride != 1 && g.stride != 2) throw ShapeError("conv stride must be 1 or 2");
  if (g.in_h == 0 || g.in_w == 0 || g.in_c == 0 || g.out_c == 0)
    throw ShapeError("conv dimensions must be positive");
  if (g.out_h() == 0 || g.out_w() == 0) throw ShapeError("conv input smaller than kernel");
}

namespace {

void expect_size(std::size_t actual, std::size_t expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(expected) + " values, got " +
                     std::to_string(actual));
  }
}

}  // namespace

// --- convolution ----------------------------------------------------------------------
//
// Each kernel is instantiated for the common power-of-two channel widths so
// the per-pixel accumulator row lives in registers; other widths take the
// generic path (N == 0). Summation order is identical either way.

namespace {

struct ConvLoop {
  std::size_t oh, ow, k, s, ci, co;
  std::ptrdiff_t pt, pl, ih, iw;

  explicit ConvLoop(const ConvGeometry& g)
      : oh(g.out_h()), ow(g.out_w()), k(g.kernel), s(g.stride), ci(g.in_c), co(g.out_c),
        pt(static_cast<std::ptrdiff_t>(g.pad_top())), pl(static_cast<std::ptrdiff_t>(g.pad_left())),
        ih(static_cast<std::ptrdiff_t>(g.in_h)), iw(static_cast<std::ptrdiff_t>(g.in_w)) {}

  std::ptrdiff_t in_y(std::size_t oy, std::size_t ky) const {
    return static_cast<std::ptrdiff_t>(oy * s + ky) - pt;
  }
  std::ptrdiff_t in_x(std::size_t ox, std::size_t kx) const {
    return static_cast<std::ptrdiff_t>(ox * s + kx) - pl;
  }
};

template <std::size_t N>
void conv_forward_impl(const double* __restrict x, const double* __restrict w, const double* b,
                       const ConvLoop& L, double* __restrict y) {
  const std::size_t co = N ? N : L.co;
  constexpr std::size_t kBuf = N ? N : 1;
  for (std::size_t oy = 0; oy < L.oh; ++oy) {
    for (std::size_t ox = 0; ox < L.ow; ++ox) {
      double* __restrict yp = y + (oy * L.ow + ox) * co;
      double acc_buf[kBuf];
      double* __restrict acc = N ? acc_buf : yp;
      for (std::size_t o = 0; o < co; ++o) acc[o] = b ? b[o] : 0.0;
      for (std::size_t ky = 0; ky < L.k; ++ky) {
        const auto iy = L.in_y(oy, ky);
        if (iy < 0 || iy >= L.ih) continue;
        for (std::size_t kx = 0; kx < L.k; ++kx) {
          const auto ix = L.in_x(ox, kx);
          if (ix < 0 || ix >= L.iw) continue;
          const double* __restrict xp = x + (iy * L.iw + ix) * L.ci;
          const double* __restrict wp = w + (ky * L.k + kx) * L.ci * co;
          for (std::size_t c = 0; c < L.ci; ++c) {
            const double xv = xp[c];
            const double* __restrict wr = wp + c * co;
#pragma omp simd
            for (std::size_t o = 0; o < co; ++o) acc[o] += xv * wr[o];
          }
        }
      }
      if constexpr (N != 0)
        for (std::size_t o = 0; o < co; ++o) yp[o] = acc[o];
    }
  }
}

// dw[kk][c][:] += sum over output pixels of x[in(pixel, kk)][c] * dy[pixel][:]
template <std::size_t N>
void conv_weight_grad_impl(const double* __restrict x, const double* __restrict dy, const ConvLoop& L,
                           double* __restrict dw) {
  const std::size_t co = N ? N : L.co;
  constexpr std::size_t kBuf = N ? N : 1;
  for (std::size_t ky = 0; ky < L.k; ++ky) {
    for (std::size_t kx = 0; kx < L.k; ++kx) {
      for (std::size_t c = 0; c < L.ci; ++c) {
        double* __restrict dwr = dw + ((ky * L.k + kx) * L.ci + c) * co;
        double acc_buf[kBuf];
        double* __restrict acc = N ? acc_buf : dwr;
        if constexpr (N != 0)
          for (std::size_t o = 0; o < co; ++o) acc[o] = dwr[o];
        for (std::size_t oy = 0; oy < L.oh; ++oy) {
          const auto iy = L.in_y(oy, ky);
          if (iy < 0 || iy >= L.ih) continue;
          for (std::size_t ox = 0; ox < L.ow; ++ox) {
            const auto ix = L.in_x(ox, kx);
            if (ix < 0 || ix >= L.iw) continue;
            const double xv = x[(iy * L.iw + ix) * L.ci + c];
            const double* __restrict dyp = dy + (oy * L.ow + ox) * co;
#pragma omp simd
            for (std::size_t o = 0; o < co; ++o) acc[o] += xv * dyp[o];
          }
        }
        if constexpr (N != 0)
          for (std::size_t o = 0; o < co; ++o) dwr[o] = acc[o];
      }
    }
  }
}

// dx[in(pixel, kk)][:] += wt[kk] (ci x co, stored [co][ci]) * dy[pixel]
template <std::size_t N>
void conv_input_grad_impl(const double* __restrict wt, const double* __restrict dy, const ConvLoop& L,
                          double* __restrict dx) {
  const std::size_t ci = N ? N : L.ci;
  constexpr std::size_t kBuf = N ? N : 1;
  for (std::size_t oy = 0; oy < L.oh; ++oy) {
    for (std::size_t ox = 0; ox < L.ow; ++ox) {
      const double* __restrict dyp = dy + (oy * L.ow + ox) * L.co;
      for (std::size_t ky = 0; ky < L.k; ++ky) {
        const auto iy = L.in_y(oy, ky);
        if (iy < 0 || iy >= L.ih) continue;
        for (std::size_t kx = 0; kx < L.k; ++kx) {
          const auto ix = L.in_x(ox, kx);
          if (ix < 0 || ix >= L.iw) continue;
          double* __restrict dxp = dx + (iy * L.iw + ix) * ci;
          const double* __restrict wtp = wt + (ky * L.k + kx) * L.co * ci;
          double acc_buf[kBuf];
          double* __restrict acc = N ? acc_buf : dxp;
          if constexpr (N != 0)
            for (std::size_t c = 0; c < ci; ++c) acc[c] = dxp[c];
          for (std::size_t o = 0; o < L.co; ++o) {
            const double dv = dyp[o];
            const double* __restrict wr = wtp + o * ci;
#pragma omp simd
            for (std::size_t c = 0; c < ci; ++c) acc[c] += dv * wr[c];
          }
          if constexpr (N != 0)
            for (std::size_t c = 0; c < ci; ++c) dxp[c] = acc[c];
        }
      }
    }
  }
}

template <template <std::size_t> class Kernel, class... Args>
void dispatch_width(std::size_t width, Args&&... args) {
  switch (width) {
    case 1: Kernel<1>::run(args...); break;
    case 2: Kernel<2>::run(args...); break;
    case 4: Kernel<4>::run(args...); break;
    case 8: Kernel<8>::run(args...); break;
    case 16: Kernel<16>::run(args...); break;
    case 32: Kernel<32>::run(args...); break;
    case 64: Kernel<64>::run(args...); break;
    case 128: Kernel<128>::run(args...); break;
    default: Kernel<0>::run(args...); break;
  }
}

template <std::size_t N>
struct ForwardKernel {
  static void run(const double* x, const double* w, const double* b, const ConvLoop& L, double* y) {
    conv_forward_impl<N>(x, w, b, L, y);
  }
};

template <std::size_t N>
struct WeightGradKernel {
  static void run(const double* x, const double* dy, const ConvLoop& L, double* dw) {
    conv_weight_grad_impl<N>(x, dy, L, dw);
  }
};

template <std::size_t N>
struct InputGradKernel {
  static void run(const double* wt, const double* dy, const ConvLoop& L, double* dx) {
    conv_input_grad_impl<N>(wt, dy, L, dx);
  }
};

}  // namespace

void conv2d_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                    const ConvGeometry& g, std::span<double> y) {
  expect_size(x.size(), g.in_size(), "conv2d input");
  expect_size(w.size(), g.weight_count(), "conv2d kernels");
  expect_size(y.size(), g.out_size(), "conv2d output");
  if (!b.empty()) expect_size(b.size(), g.out_c, "conv2d bias");
  const ConvLoop loop(g);
  dispatch_width<ForwardKernel>(g.out_c, x.data(), w.data(), b.empty() ? nullptr : b.data(), loop, y.data());
}

void conv2d_backward(std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, const ConvGeometry& g, std::span<double> dx,
                     std::span<double> dw, std::span<double> db) {
  expect_size(x.size(), g.in_size(), "conv2d input");
  expect_size(w.size(), g.weight_count(), "conv2d kernels");
  expect_size(dy.size(), g.out_size(), "conv2d output gradient");
  expect_size(dw.size(), g.weight_count(), "conv2d kernel gradient");
  if (!dx.empty()) expect_size(dx.size(), g.in_size(), "conv2d input gradient");
  if (!db.empty()) expect_size(db.size(), g.out_c, "conv2d bias gradient");

  const ConvLoop loop(g);
  const std::size_t pixels = g.out_h() * g.out_w(), co = g.out_c, ci = g.in_c, kk = g.kernel * g.kernel;
  if (!db.empty()) {
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t o = 0; o < co; ++o) db[o] += dy[p * co + o];
  }
  dispatch_width<WeightGradKernel>(co, x.data(), dy.data(), loop, dw.data());

  if (!dx.empty()) {
    // [k*k][out_c][in_c] copy so the input-gradient update is a contiguous axpy.
    std::vector<double> wt(w.size());
    for (std::size_t t = 0; t < kk; ++t)
      for (std::size_t c = 0; c < ci; ++c)
        for (std::size_t o = 0; o < co; ++o) wt[(t * co + o) * ci + c] = w[(t * ci + c) * co + o];
    std::fill(dx.begin(), dx.end(), 0.0);
    dispatch_width<InputGradKernel>(ci, wt.data(), dy.data(), loop, dx.data());
  }
}

// --- dense --------------------------------------------------------------------------------

void dense_forward(std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y) {
  const std::size_t n = x.size(), m = y.size();
  expect_size(w.size(), m * n, "dense weights");
  if (!b.empty()) expect_size(b.size(), m, "dense bias");
  for (std::size_t r = 0; r < m; ++r) {
    const double* __restrict wr = w.data() + r * n;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t c = 0; c < n; ++c) acc += wr[c] * x[c];
    y[r] = acc + (b.empty() ? 0.0 : b[r]);
  }
}

void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                    std::span<double> db) {
  const std::size_t n = x.size(), m = dy.size();
  expect_size(w.size(), m * n, "dense weights");
  expect_size(dw.size(), m * n, "dense weight gradient");
  if (!db.empty()) expect_size(db.size(), m, "dense bias gradient");
  if (!dx.empty()) {
    expect_size(dx.size(), n, "dense input gradient");
    std::fill(dx.begin(), dx.end(), 0.0);
  }
  for (std::size_t r = 0; r < m; ++r) {
    const double g = dy[r];
    if (!db.empty()) db[r] += g;
    double* __restrict dwr = dw.data() + r * n;
    const double* __restrict xr = x.data();
#pragma omp simd
    for (std::size_t c = 0; c < n; ++c) dwr[c] += g * xr[c];
    if (!dx.empty()) {
      const double* __restrict wr = w.data() + r * n;
      double* __restrict dxp = dx.data();
#pragma omp simd
      for (std::size_t c = 0; c < n; ++c) dxp[c] += g * wr[c];
    }
  }
}

// --- activations / loss ---------------------------------------------------------------------

double activate(double x, Activation act) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? x : kLeakySlope * x;
    case Activation::elu: return x > 0.0 ? x : kEluAlpha * std::expm1(x);
  }
  return x;
}

double activate_grad(double x, Activation act) {
  switch (act) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? 1.0 : kLeakySlope;
    case Activation::elu: return x > 0.0 ? 1.0 : kEluAlpha * std::exp(x);
  }
  return 1.0;
}

void activation_forward(std::span<const double> x, Activation act, std::span<double> y) {
  expect_size(y.size(), x.size(), "activation output");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate(x[i], act);
}

void activation_backward(std::span<const double> x, std::span<const double> dy, Activation act,
                         std::span<double> dx) {
  expect_size(dy.size(), x.size(), "activation output gradient");
  expect_size(dx.size(), x.size(), "activation input gradient");
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * activate_grad(x[i], act);
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logits(double z, double y) {
  // max(z,0) - z*y + log(1 + exp(-|z|))
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double bce_with_logits_grad(double z, double y) { return sigmoid(z) - y; }

}  // namespace cvir::nn
