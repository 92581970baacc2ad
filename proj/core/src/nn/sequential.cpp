#include "cvir/nn/sequential.hpp"

#include <random>

#include "cvir/error.hpp"

namespace cvir::nn {

Sequential::Sequential(Shape3 input, std::vector<LayerSpec> specs) : input_(input), specs_(std::move(specs)) {
  if (input.size() == 0) throw ShapeError("model input shape must be non-empty");
  Shape3 shape = input;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].kind == LayerKind::sigmoid && i + 1 != specs_.size())
      throw ShapeError("sigmoid is only supported as the final layer");
    auto layer = make_layer(specs_[i], shape);
    offsets_.push_back(total_params_);
    total_params_ += layer->param_count();
    shape = layer->output_shape();
    layers_.push_back(std::move(layer));
  }
  trailing_sigmoid_ = !specs_.empty() && specs_.back().kind == LayerKind::sigmoid;
}

Shape3 Sequential::output_shape() const {
  const auto n = compute_layers();
  return n == 0 ? input_ : layers_[n - 1]->output_shape();
}

std::vector<float> Sequential::init_params(std::uint64_t seed) const {
  std::vector<float> params(total_params_, 0.f);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->init(std::span<float>(params).subspan(offsets_[i], layers_[i]->param_count()), rng);
  return params;
}

std::span<const double> Sequential::forward(std::span<const double> params, std::span<const double> input,
                                            Tape& tape) const {
  if (params.size() != total_params_) {
    throw ShapeError("model expects " + std::to_string(total_params_) + " parameters, got " +
                     std::to_string(params.size()));
  }
  if (input.size() != input_.size()) {
    throw ShapeError("model expects input of " + std::to_string(input_.size()) + " values, got " +
                     std::to_string(input.size()));
  }
  const auto n = compute_layers();
  tape.acts_.resize(n + 1);
  tape.caches_.resize(n);
  tape.acts_[0].assign(input.begin(), input.end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& layer = *layers_[i];
    tape.acts_[i + 1].resize(layer.output_shape().size());
    layer.forward(params.subspan(offsets_[i], layer.param_count()), tape.acts_[i], tape.caches_[i],
                  tape.acts_[i + 1]);
  }
  return tape.acts_[n];
}

void Sequential::backward(std::span<const double> params, Tape& tape, std::span<const double> dout,
                          std::span<double> grads, std::span<double> dinput) const {
  if (grads.size() != total_params_) throw ShapeError("gradient buffer does not match parameter count");
  const auto n = compute_layers();
  if (tape.acts_.size() != n + 1) throw InvalidArgument("backward called without a matching forward");
  if (dout.size() != tape.acts_[n].size()) throw ShapeError("output gradient has the wrong size");

  std::vector<double> dy(dout.begin(), dout.end()), dx;
  for (std::size_t i = n; i-- > 0;) {
    const auto& layer = *layers_[i];
    const bool need_dx = i > 0 || !dinput.empty();
    dx.assign(need_dx ? layer.input_shape().size() : 0, 0.0);
    layer.backward(params.subspan(offsets_[i], layer.param_count()), tape.acts_[i], tape.caches_[i], dy, dx,
                   grads.subspan(offsets_[i], layer.param_count()));
    dy.swap(dx);
  }
  if (!dinput.empty()) {
    if (n == 0) {
      std::copy(dout.begin(), dout.end(), dinput.begin());
    } else {
      std::copy(dy.begin(), dy.end(), dinput.begin());
    }
  }
}

std::vector<double> Sequential::predict(std::span<const double> params, std::span<const double> input,
                                        Tape& tape) const {
  auto out = forward(params, input, tape);
  std::vector<double> y(out.begin(), out.end());
  if (trailing_sigmoid_)
    for (auto& v : y) v = sigmoid(v);
  return y;
}

std::vector<double> widen(std::span<const float> values) { return {values.begin(), values.end()}; }

double model_loss(const Sequential& model, std::span<const double> output, std::span<const double> targets,
                  std::span<double> dout) {
  if (model.ends_with_sigmoid()) {
    if (output.size() != 1 || targets.size() != 1)
      throw ShapeError("sigmoid models need a scalar output and one target");
    if (!dout.empty()) dout[0] = bce_with_logits_grad(output[0], targets[0]);
    return bce_with_logits(output[0], targets[0]);
  }
  if (targets.size() != output.size()) throw ShapeError("target size does not match model output");
  double loss = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double r = output[i] - targets[i];
    loss += 0.5 * r * r;
    if (!dout.empty()) dout[i] = r;
  }
  return loss;
}

}  // namespace cvir::nn
