#include "cvir/nn/layers.hpp"

#include <cmath>
#include <string>

#include "cvir/error.hpp"

namespace cvir::nn {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::activation: return "activation";
    case LayerKind::residual_unit_identity: return "residual_unit_identity";
    case LayerKind::residual_unit_projection: return "residual_unit_projection";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::sigmoid: return "sigmoid";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto k : {LayerKind::dense, LayerKind::conv2d, LayerKind::activation,
                 LayerKind::residual_unit_identity, LayerKind::residual_unit_projection,
                 LayerKind::global_avg_pool, LayerKind::flatten, LayerKind::sigmoid}) {
    if (to_string(k) == text) return k;
  }
  throw InvalidArgument("unknown layer kind '" + std::string(text) + "'");
}

LayerSpec LayerSpec::dense(std::size_t units) { return {LayerKind::dense, units, 0, 1}; }

LayerSpec LayerSpec::conv2d(std::size_t filters, std::size_t kernel, std::size_t stride, Padding padding) {
  return {LayerKind::conv2d, filters, kernel, stride, padding};
}

LayerSpec LayerSpec::act(Activation a) {
  LayerSpec s{LayerKind::activation, 0, 0, 1};
  s.activation = a;
  return s;
}

LayerSpec LayerSpec::residual_identity(std::size_t filters, Activation a) {
  return {LayerKind::residual_unit_identity, filters, 3, 1, Padding::same, a};
}

LayerSpec LayerSpec::residual_projection(std::size_t filters, std::size_t stride, Activation a) {
  return {LayerKind::residual_unit_projection, filters, 3, stride, Padding::same, a};
}

LayerSpec LayerSpec::global_avg_pool() { return {LayerKind::global_avg_pool, 0, 0, 1}; }
LayerSpec LayerSpec::flatten() { return {LayerKind::flatten, 0, 0, 1}; }
LayerSpec LayerSpec::sigmoid() { return {LayerKind::sigmoid, 0, 0, 1}; }

nlohmann::ordered_json to_json(const LayerSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(spec.kind);
  switch (spec.kind) {
    case LayerKind::dense:
      j["units"] = spec.units;
      break;
    case LayerKind::conv2d:
      j["filters"] = spec.units;
      j["kernel"] = spec.kernel;
      j["stride"] = spec.stride;
      j["padding"] = to_string(spec.padding);
      break;
    case LayerKind::activation:
      j["activation"] = to_string(spec.activation);
      break;
    case LayerKind::residual_unit_identity:
    case LayerKind::residual_unit_projection:
      j["filters"] = spec.units;
      j["stride"] = spec.stride;
      j["activation"] = to_string(spec.activation);
      break;
    default:
      break;
  }
  return j;
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  try {
    const auto kind = parse_layer_kind(j.at("kind").get<std::string>());
    switch (kind) {
      case LayerKind::dense: return LayerSpec::dense(j.at("units").get<std::size_t>());
      case LayerKind::conv2d:
        return LayerSpec::conv2d(j.at("filters").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                                 j.at("stride").get<std::size_t>(),
                                 parse_padding(j.at("padding").get<std::string>()));
      case LayerKind::activation:
        return LayerSpec::act(parse_activation(j.at("activation").get<std::string>()));
      case LayerKind::residual_unit_identity:
        return LayerSpec::residual_identity(j.at("filters").get<std::size_t>(),
                                            parse_activation(j.at("activation").get<std::string>()));
      case LayerKind::residual_unit_projection:
        return LayerSpec::residual_projection(j.at("filters").get<std::size_t>(),
                                              j.at("stride").get<std::size_t>(),
                                              parse_activation(j.at("activation").get<std::string>()));
      case LayerKind::global_avg_pool: return LayerSpec::global_avg_pool();
      case LayerKind::flatten: return LayerSpec::flatten();
      case LayerKind::sigmoid: return LayerSpec::sigmoid();
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("malformed layer spec: ") + ex.what());
  }
  throw InvalidArgument("malformed layer spec");
}

void Layer::init(std::span<float>, std::mt19937_64&) const {}

namespace {

void he_uniform(std::span<float> w, std::size_t fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : w) v = static_cast<float>(dist(rng));
}

/// A conv parameter block [weights | bias] at some offset into the layer's params.
struct ConvBlock {
  ConvGeometry g;
  std::size_t offset = 0;

  std::size_t count() const { return g.weight_count() + g.out_c; }
  std::span<const double> w(std::span<const double> p) const { return p.subspan(offset, g.weight_count()); }
  std::span<const double> b(std::span<const double> p) const {
    return p.subspan(offset + g.weight_count(), g.out_c);
  }
  std::span<double> dw(std::span<double> p) const { return p.subspan(offset, g.weight_count()); }
  std::span<double> db(std::span<double> p) const { return p.subspan(offset + g.weight_count(), g.out_c); }

  void init(std::span<float> p, std::mt19937_64& rng) const {
    he_uniform(p.subspan(offset, g.weight_count()), g.kernel * g.kernel * g.in_c, rng);
    auto bias = p.subspan(offset + g.weight_count(), g.out_c);
    std::fill(bias.begin(), bias.end(), 0.f);
  }
};

ConvGeometry geometry(Shape3 in, std::size_t filters, std::size_t kernel, std::size_t stride,
                      Padding padding) {
  ConvGeometry g{in.h, in.w, in.c, filters, kernel, stride, padding};
  validate(g);
  return g;
}

Shape3 out_shape(const ConvGeometry& g) { return {g.out_h(), g.out_w(), g.out_c}; }

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

class DenseLayer final : public Layer {
 public:
  DenseLayer(Shape3 in, std::size_t units) : in_(in), units_(units) {
    if (units == 0) throw ShapeError("dense layer needs at least one unit");
    if (in.h != 1 || in.w != 1)
      throw ShapeError("dense layer expects a flat input; add flatten or global_avg_pool first");
  }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return {1, 1, units_}; }
  std::size_t param_count() const override { return units_ * in_.c + units_; }

  void init(std::span<float> p, std::mt19937_64& rng) const override {
    he_uniform(p.first(units_ * in_.c), in_.c, rng);
    std::fill(p.begin() + static_cast<std::ptrdiff_t>(units_ * in_.c), p.end(), 0.f);
  }

  void forward(std::span<const double> p, std::span<const double> x, LayerCache&,
               std::span<double> y) const override {
    dense_forward(x, p.first(units_ * in_.c), p.subspan(units_ * in_.c), y);
  }

  void backward(std::span<const double> p, std::span<const double> x, const LayerCache&,
                std::span<const double> dy, std::span<double> dx, std::span<double> dp) const override {
    dense_backward(x, p.first(units_ * in_.c), dy, dx, dp.first(units_ * in_.c), dp.subspan(units_ * in_.c));
  }

 private:
  Shape3 in_;
  std::size_t units_;
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(Shape3 in, const LayerSpec& s) : in_(in), conv_{geometry(in, s.units, s.kernel, s.stride, s.padding)} {}
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return out_shape(conv_.g); }
  std::size_t param_count() const override { return conv_.count(); }
  void init(std::span<float> p, std::mt19937_64& rng) const override { conv_.init(p, rng); }

  void forward(std::span<const double> p, std::span<const double> x, LayerCache&,
               std::span<double> y) const override {
    conv2d_forward(x, conv_.w(p), conv_.b(p), conv_.g, y);
  }

  void backward(std::span<const double> p, std::span<const double> x, const LayerCache&,
                std::span<const double> dy, std::span<double> dx, std::span<double> dp) const override {
    conv2d_backward(x, conv_.w(p), dy, conv_.g, dx, conv_.dw(dp), conv_.db(dp));
  }

 private:
  Shape3 in_;
  ConvBlock conv_;
};

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(Shape3 in, Activation act) : in_(in), act_(act) {}
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return in_; }

  void forward(std::span<const double>, std::span<const double> x, LayerCache&,
               std::span<double> y) const override {
    activation_forward(x, act_, y);
  }

  void backward(std::span<const double>, std::span<const double> x, const LayerCache&,
                std::span<const double> dy, std::span<double> dx, std::span<double>) const override {
    if (!dx.empty()) activation_backward(x, dy, act_, dx);
  }

 private:
  Shape3 in_;
  Activation act_;
};

class SigmoidLayer final : public Layer {
 public:
  explicit SigmoidLayer(Shape3 in) : in_(in) {}
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return in_; }

  void forward(std::span<const double>, std::span<const double> x, LayerCache&,
               std::span<double> y) const override {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  }

  void backward(std::span<const double>, std::span<const double> x, const LayerCache&,
                std::span<const double> dy, std::span<double> dx, std::span<double>) const override {
    if (dx.empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = sigmoid(x[i]);
      dx[i] = dy[i] * s * (1.0 - s);
    }
  }

 private:
  Shape3 in_;
};

class FlattenLayer final : public Layer {
 public:
  explicit FlattenLayer(Shape3 in) : in_(in) {}
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return {1, 1, in_.size()}; }

  void forward(std::span<const double>, std::span<const double> x, LayerCache&,
               std::span<double> y) const override {
    std::copy(x.begin(), x.end(), y.begin());
  }

  void backward(std::span<const double>, std::span<const double>, const LayerCache&,
                std::span<const double> dy, std::span<double> dx, std::span<double>) const override {
    if (!dx.empty()) std::copy(dy.begin(), dy.end(), dx.begin());
  }

 private:
  Shape3 in_;
};

class GlobalAvgPoolLayer final : public Layer {
 public:
  explicit GlobalAvgPoolLayer(Shape3 in) : in_(in) {}
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return {1, 1, in_.c}; }

  void forward(std::span<const double>, std::span<const double> x, LayerCache&,
               std::span<double> y) const override {
    const std::size_t hw = in_.h * in_.w, c = in_.c;
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < hw; ++i)
      for (std::size_t k = 0; k < c; ++k) y[k] += x[i * c + k];
    for (auto& v : y) v /= static_cast<double>(hw);
  }

  void backward(std::span<const double>, std::span<const double>, const LayerCache&,
                std::span<const double> dy, std::span<double> dx, std::span<double>) const override {
    if (dx.empty()) return;
    const std::size_t hw = in_.h * in_.w, c = in_.c;
    const double scale = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i)
      for (std::size_t k = 0; k < c; ++k) dx[i * c + k] = dy[k] * scale;
  }

 private:
  Shape3 in_;
};

// y = act(conv2(act(conv1(x))) + shortcut(x)), where shortcut is the identity
// or a strided 1x1 convolution.
class ResidualUnit final : public Layer {
 public:
  ResidualUnit(Shape3 in, const LayerSpec& s, bool projection)
      : in_(in), act_(s.activation), projection_(projection) {
    conv1_.g = geometry(in, s.units, 3, projection ? s.stride : 1, Padding::same);
    conv2_.g = geometry(out_shape(conv1_.g), s.units, 3, 1, Padding::same);
    conv2_.offset = conv1_.count();
    if (projection) {
      shortcut_.g = geometry(in, s.units, 1, s.stride, Padding::same);
      shortcut_.offset = conv2_.offset + conv2_.count();
    } else if (in.c != s.units || s.stride != 1) {
      throw ShapeError("identity residual unit needs " + std::to_string(s.units) +
                       " input channels and stride 1, got " + std::to_string(in.c) + " channels");
    }
  }

  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return out_shape(conv2_.g); }
  std::size_t param_count() const override {
    return conv1_.count() + conv2_.count() + (projection_ ? shortcut_.count() : 0);
  }

  void init(std::span<float> p, std::mt19937_64& rng) const override {
    conv1_.init(p, rng);
    conv2_.init(p, rng);
    if (projection_) shortcut_.init(p, rng);
  }

  void forward(std::span<const double> p, std::span<const double> x, LayerCache& cache,
               std::span<double> y) const override {
    cache.buffers.resize(3);
    auto& h1 = cache.buffers[0];
    auto& a1 = cache.buffers[1];
    auto& pre = cache.buffers[2];
    h1.resize(conv1_.g.out_size());
    a1.resize(h1.size());
    pre.resize(conv2_.g.out_size());

    conv2d_forward(x, conv1_.w(p), conv1_.b(p), conv1_.g, h1);
    activation_forward(h1, act_, a1);
    conv2d_forward(a1, conv2_.w(p), conv2_.b(p), conv2_.g, pre);
    if (projection_) {
      std::vector<double> sc(shortcut_.g.out_size());
      conv2d_forward(x, shortcut_.w(p), shortcut_.b(p), shortcut_.g, sc);
      add_into(pre, sc);
    } else {
      add_into(pre, x);
    }
    activation_forward(pre, act_, y);
  }

  void backward(std::span<const double> p, std::span<const double> x, const LayerCache& cache,
                std::span<const double> dy, std::span<double> dx, std::span<double> dp) const override {
    const auto& h1 = cache.buffers[0];
    const auto& a1 = cache.buffers[1];
    const auto& pre = cache.buffers[2];

    std::vector<double> dpre(pre.size());
    activation_backward(pre, dy, act_, dpre);

    std::vector<double> da1(a1.size());
    conv2d_backward(a1, conv2_.w(p), dpre, conv2_.g, da1, conv2_.dw(dp), conv2_.db(dp));
    std::vector<double> dh1(h1.size());
    activation_backward(h1, da1, act_, dh1);
    conv2d_backward(x, conv1_.w(p), dh1, conv1_.g, dx, conv1_.dw(dp), conv1_.db(dp));

    if (projection_) {
      std::vector<double> dxs(dx.empty() ? 0 : x.size());
      conv2d_backward(x, shortcut_.w(p), dpre, shortcut_.g, dxs, shortcut_.dw(dp), shortcut_.db(dp));
      if (!dx.empty()) add_into(dx, dxs);
    } else if (!dx.empty()) {
      add_into(dx, dpre);
    }
  }

 private:
  Shape3 in_;
  Activation act_;
  bool projection_;
  ConvBlock conv1_, conv2_, shortcut_;
};

}  // namespace

std::unique_ptr<const Layer> make_layer(const LayerSpec& spec, Shape3 in) {
  switch (spec.kind) {
    case LayerKind::dense: return std::make_unique<DenseLayer>(in, spec.units);
    case LayerKind::conv2d: return std::make_unique<ConvLayer>(in, spec);
    case LayerKind::activation: return std::make_unique<ActivationLayer>(in, spec.activation);
    case LayerKind::residual_unit_identity: return std::make_unique<ResidualUnit>(in, spec, false);
    case LayerKind::residual_unit_projection: return std::make_unique<ResidualUnit>(in, spec, true);
    case LayerKind::global_avg_pool: return std::make_unique<GlobalAvgPoolLayer>(in);
    case LayerKind::flatten: return std::make_unique<FlattenLayer>(in);
    case LayerKind::sigmoid: return std::make_unique<SigmoidLayer>(in);
  }
  throw InvalidArgument("unsupported layer kind");
}

}  // namespace cvir::nn
