#include <gtest/gtest.h>

#include <sstream>

#include "cvir/deepcvir.hpp"
#include "cvir/error.hpp"
#include "cvir/nn/model_file.hpp"
#include "cvir/parallel.hpp"

namespace cvir {
namespace {

EmbeddingSet small_synthetic(std::uint64_t seed = 3, std::size_t dim = 16, std::size_t per_class = 12) {
  SyntheticConfig cfg;
  cfg.n_classes = 3;
  cfg.per_class = per_class;
  cfg.dim = dim;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

TEST(Reshape, RowMajorGrid) {
  const std::vector<float> v{1, 2, 3, 4};
  const auto g = reshape_1d_to_2d(v);
  EXPECT_EQ(g.shape(), (nn::Shape{2, 2}));
  EXPECT_EQ(g.at({0, 1}), 2.f);
  EXPECT_EQ(g.at({1, 0}), 3.f);
}

TEST(Reshape, Bijective) {
  std::vector<float> v(1024);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) * 0.5f - 7.f;
  const auto g = reshape_1d_to_2d(v);
  EXPECT_EQ(std::vector<float>(g.data().begin(), g.data().end()), v);
}

TEST(Reshape, NonSquareRejected) {
  EXPECT_THROW(reshape_1d_to_2d(std::vector<float>(1000)), InvalidArgument);
  EXPECT_THROW(build_model({1}, 1000), InvalidArgument);
}

TEST(StackPair, ChannelOrder) {
  const auto g = reshape_1d_to_2d(std::vector<float>{1, 2, 3, 4});
  const auto a = reshape_1d_to_2d(std::vector<float>{5, 6, 7, 8});
  const auto s = stack_pair(g, a);
  EXPECT_EQ(s.shape(), (nn::Shape{2, 2, 2}));
  EXPECT_EQ(s.at({1, 1, 0}), 4.f);
  EXPECT_EQ(s.at({1, 1, 1}), 8.f);
  const auto same = stack_pair(g, g);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(same[2 * i], same[2 * i + 1]);
  const auto swapped = stack_pair(a, g);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(swapped[2 * i], s[2 * i + 1]);
    EXPECT_EQ(swapped[2 * i + 1], s[2 * i]);
  }
  EXPECT_THROW(stack_pair(g, reshape_1d_to_2d(std::vector<float>(9))), ShapeError);
}

TEST(StackPair, MatchesModelInput) {
  const auto model = build_model({1}, 4);
  const std::vector<float> g{1, 2, 3, 4}, a{5, 6, 7, 8};
  const auto in = model.make_input(g, a);
  const auto s = stack_pair(reshape_1d_to_2d(g), reshape_1d_to_2d(a));
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(in[i], s[i]);
}

TEST(DmlModel, ParamCountsIncrease) {
  const auto s = build_model({1}), d = build_model({2}), t = build_model({3});
  EXPECT_LT(s.param_count(), d.param_count());
  EXPECT_LT(d.param_count(), t.param_count());
}

TEST(DmlModel, ZeroWeightsScoreHalf) {
  auto m = build_model({1}, 16);
  m.set_params(std::vector<float>(m.param_count(), 0.f));
  const std::vector<float> u(16, 0.3f), v(16, -1.f);
  EXPECT_EQ(m.score(u, v), 0.5);
}

TEST(DmlModel, OutputInOpenUnitIntervalAndOrderSensitive) {
  const auto data = small_synthetic();
  const auto m = build_model({1, nn::Activation::elu}, 16, {}, 9);
  const auto g = data.indices_of(View::ground), a = data.indices_of(View::aerial);
  bool asymmetric = false;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& u = data[g[i]].vector;
    const auto& v = data[a[i]].vector;
    const double s = m.score(u, v);
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
    asymmetric = asymmetric || s != m.score(v, u);
  }
  EXPECT_TRUE(asymmetric);
}

TEST(DmlModel, WrongDimensionRejected) {
  const auto m = build_model({1}, 16);
  EXPECT_THROW(m.score(std::vector<float>(9), std::vector<float>(9)), ShapeError);
}

TEST(DmlModel, FileRoundTrip) {
  auto m = build_model({2, nn::Activation::relu}, 16, {4, {8}}, 5);
  m.meta.epochs_run = 7;
  std::stringstream ss;
  nn::write_model_file(m.to_file(), ss);
  const auto back = DMLModel::from_file(nn::read_model_file(ss));
  EXPECT_EQ(back.variant(), m.variant());
  EXPECT_EQ(back.architecture(), m.architecture());
  EXPECT_TRUE(std::equal(back.params().begin(), back.params().end(), m.params().begin(), m.params().end()));
  EXPECT_EQ(back.meta.epochs_run, 7u);
}

TEST(DmlModel, CorruptBlobRejected) {
  std::stringstream ss;
  nn::write_model_file(build_model({1}, 16).to_file(), ss);
  auto text = ss.str();
  text.resize(text.size() - 20);
  std::stringstream cut(text + "\n");
  EXPECT_THROW(nn::read_model_file(cut), ParseError);
}

struct TinyRun {
  DMLModel model;
  std::vector<EpochLog> logs;
};

TinyRun tiny_train(std::size_t threads, std::size_t max_epochs = 3, std::size_t patience = 15) {
  const auto data = small_synthetic();
  const auto [tr, va] = split(data, 0.8, 1);
  const auto tp = make_pairs(tr, {}, 1), vp = make_pairs(va, {}, 2);
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.max_epochs = max_epochs;
  cfg.early_stopping_patience = patience;
  cfg.samples_per_epoch = 96;
  cfg.batch_size = 8;
  cfg.threads = threads;
  TinyRun run{build_model({1}, 16, {4, {16}}, 4), {}};
  run.model = train_dml(run.model, tp, vp, data, cfg, [&](const EpochLog& l) { run.logs.push_back(l); });
  return run;
}

TEST(Training, DeterministicAcrossRunsAndThreads) {
  const auto a = tiny_train(1), b = tiny_train(1), c = tiny_train(3);
  const auto pa = a.model.params(), pb = b.model.params(), pc = c.model.params();
  EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()));
  EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pc.begin(), pc.end()));
  ASSERT_EQ(a.logs.size(), c.logs.size());
  for (std::size_t i = 0; i < a.logs.size(); ++i) EXPECT_EQ(a.logs[i].val_loss, c.logs[i].val_loss);
}

TEST(Training, EarlyStoppingBound) {
  const auto run = tiny_train(0, 40, 2);
  const auto& meta = run.model.meta;
  EXPECT_LE(meta.epochs_run, meta.best_epoch + 2);
  EXPECT_EQ(run.logs.size(), meta.epochs_run);
  double best = 1e300;
  for (const auto& l : run.logs) best = std::min(best, l.val_loss);
  EXPECT_EQ(best, meta.best_val_loss);
  EXPECT_EQ(run.logs[meta.best_epoch - 1].val_loss, best);
}

TEST(Training, RejectsBadPairs) {
  const auto data = small_synthetic();
  const std::vector<PairSample> swapped{{"a_0000", "g_0000", 0}};
  TrainConfig cfg;
  EXPECT_THROW(train_dml(build_model({1}, 16), swapped, swapped, data, cfg), InvalidArgument);
  const std::vector<PairSample> unknown{{"g_9999", "a_0000", 0}};
  EXPECT_THROW(train_dml(build_model({1}, 16), unknown, unknown, data, cfg), InvalidArgument);
  cfg.batch_size = 0;
  const std::vector<PairSample> ok{{"g_0000", "a_0000", 0}};
  EXPECT_THROW(train_dml(build_model({1}, 16), ok, ok, data, cfg), InvalidArgument);
}

TEST(Variant, Names) {
  EXPECT_EQ((DMLVariant{2}.name()), "dml-d");
  EXPECT_EQ(parse_dml_depth("T"), 3);
  EXPECT_EQ(parse_dml_depth("dml-s"), 1);
  EXPECT_THROW(parse_dml_depth("dml-x"), InvalidArgument);
}

}  // namespace
}  // namespace cvir
