#include <gtest/gtest.h>

#include "cvir/deepcvir.hpp"
#include "cvir/error.hpp"
#include "cvir/nn/gradcheck.hpp"
#include "cvir/nn/layers.hpp"
#include "cvir/nn/sequential.hpp"
#include "support/layer_cases.hpp"

namespace cvir::nn {
namespace {

TEST(LayerGradients, EveryKindBelowOneInTenThousand) {
  for (auto& c : testing::layer_cases()) {
    const auto rep = gradient_check(c.model, c.params, c.input, c.targets);
    EXPECT_LT(rep.max_relative_error, 1e-4) << c.name;
    EXPECT_GT(rep.coordinates_checked, 0u) << c.name;
  }
}

TEST(LayerGradients, TinySModelBelowOneInAThousand) {
  const auto c = testing::tiny_s_model();
  EXPECT_LT(c.model.param_count(), 100000u);
  const auto rep = gradient_check(c.model, c.params, c.input, c.targets);
  EXPECT_LT(rep.max_relative_error, 1e-3);
}

TEST(Residual, ZeroWeightIdentityUnitIsIdentity) {
  const Sequential unit({4, 4, 3}, {LayerSpec::residual_identity(3, Activation::relu)});
  std::vector<double> params(unit.param_count(), 0.0);
  const auto x = testing::gaussian(48, 3);
  std::vector<double> nonneg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) nonneg[i] = std::abs(x[i]);
  Tape tape;
  const auto y = unit.forward(params, nonneg, tape);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], nonneg[i]);
}

TEST(Residual, ProjectionHalvesSpatialDoublesChannels) {
  const auto layer = make_layer(LayerSpec::residual_projection(8, 2, Activation::elu), {6, 6, 4});
  EXPECT_EQ(layer->output_shape(), (Shape3{3, 3, 8}));
  // two 3x3 convs plus the 1x1 shortcut, all with biases
  EXPECT_EQ(layer->param_count(), (9u * 4 * 8 + 8) + (9u * 8 * 8 + 8) + (4u * 8 + 8));
}

TEST(Residual, IdentityUnitRejectsChannelChange) {
  EXPECT_THROW(make_layer(LayerSpec::residual_identity(5, Activation::relu), {4, 4, 3}), ShapeError);
}

TEST(Sequential, SigmoidOnlyLast) {
  EXPECT_THROW(Sequential({1, 1, 2}, {LayerSpec::sigmoid(), LayerSpec::dense(1)}), InvalidArgument);
}

TEST(Sequential, ShapeAlgebraForEveryVariant) {
  const std::size_t expected_params[] = {44337, 128561, 448561};
  const Shape3 trunk[] = {{16, 16, 32}, {8, 8, 64}, {4, 4, 128}};
  for (int depth = 1; depth <= 3; ++depth) {
    const auto specs = dml_layer_specs({depth, Activation::leaky_relu});
    const Sequential net({32, 32, 2}, specs);
    EXPECT_EQ(net.output_shape().size(), 1u);
    EXPECT_EQ(net.param_count(), expected_params[depth - 1]);
    // the global-average-pool layer consumes the trunk output
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].kind == LayerKind::global_avg_pool) {
        EXPECT_EQ(net.layer(i).input_shape(), trunk[depth - 1]);
      }
    }
  }
}

TEST(LayerSpec, JsonRoundTrip) {
  for (const auto& s : dml_layer_specs({3, Activation::elu})) {
    const auto j = to_json(s);
    EXPECT_EQ(layer_spec_from_json(nlohmann::json::parse(j.dump())), s) << j.dump();
  }
  EXPECT_THROW(layer_spec_from_json(nlohmann::json{{"kind", "pool"}}), InvalidArgument);
}

TEST(LayerSpec, RejectsUnsupportedKernel) {
  EXPECT_THROW(make_layer(LayerSpec::conv2d(4, 5), {8, 8, 1}), ShapeError);
}

TEST(Init, HeUniformBoundsAndZeroBias) {
  const Sequential net({1, 1, 50}, {LayerSpec::dense(20)});
  const auto p = net.init_params(3);
  const double limit = std::sqrt(6.0 / 50.0);
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_LE(std::abs(p[i]), limit);
  for (std::size_t i = 1000; i < 1020; ++i) EXPECT_EQ(p[i], 0.f);
  EXPECT_EQ(p, net.init_params(3));
  EXPECT_NE(p, net.init_params(4));
}

}  // namespace
}  // namespace cvir::nn
