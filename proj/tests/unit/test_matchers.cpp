#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cvir/error.hpp"
#include "cvir/matchers.hpp"
#include "cvir/nn/model_file.hpp"

namespace cvir {
namespace {

std::vector<float> rand_vec(std::size_t d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(n(rng));
  return v;
}

CovarianceModel identity_cov(std::size_t d) {
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  return CovarianceModel(d, eye, 0.0, 0);
}

EmbeddingSet gaussian_set(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EmbeddingSet s(d);
  for (std::size_t i = 0; i < n; ++i) s.add({"r" + std::to_string(i), i % 2 ? View::aerial : View::ground, "c",
                                             rand_vec(d, rng)});
  return s;
}

TEST(Euclidean, Examples) {
  EXPECT_DOUBLE_EQ(euclidean_score(std::vector<float>{0, 0}, std::vector<float>{3, 4}), 5.0);
  const std::vector<float> u{1.5f, -2.f, 7.f};
  EXPECT_EQ(euclidean_score(u, u), 0.0);
  EXPECT_THROW(euclidean_score(u, std::vector<float>{1.f}), ShapeError);
}

TEST(Euclidean, MatchesLongDoubleSummation) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto u = rand_vec(16, rng), v = rand_vec(16, rng);
    long double acc = 0;
    for (int i = 0; i < 16; ++i) acc += (static_cast<long double>(u[i]) - v[i]) * (static_cast<long double>(u[i]) - v[i]);
    const double ref = static_cast<double>(std::sqrt(acc));
    EXPECT_NEAR(euclidean_score(u, v), ref, 1e-6 * ref);
  }
}

TEST(Covariance, StandardNormalGivesIdentityInverse) {
  const auto s = gaussian_set(10000, 4, 7);
  const auto cov = fit_covariance(s, 0.0);
  EXPECT_EQ(cov.fitted_on(), 10000u);
  const auto inv = cov.inverse_covariance();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(inv[r * 4 + c], r == c ? 1.0 : 0.0, 0.1);
}

TEST(Covariance, SingularWithoutRidge) {
  EmbeddingSet s(3);
  s.add({"a", View::ground, "c", {1, 2, 3}});
  s.add({"b", View::aerial, "c", {1, 2, 3}});
  try {
    fit_covariance(s, 0.0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  EXPECT_NO_THROW(fit_covariance(s, 1e-3));
}

TEST(Covariance, RidgeAlwaysSucceeds) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    EmbeddingSet s(12);
    for (int i = 0; i < 3; ++i) s.add({"r" + std::to_string(i), View::ground, "c", rand_vec(12, rng, 1e3)});
    EXPECT_NO_THROW(fit_covariance(s, 1e-3));
  }
}

TEST(Covariance, DefaultRidgeScalesWithTrace) {
  const auto s = gaussian_set(500, 5, 2);
  const auto cov = fit_covariance(s);
  EXPECT_GT(cov.ridge(), 0.5e-3);
  EXPECT_LT(cov.ridge(), 2e-3);
}

TEST(Mahalanobis, DiagonalExample) {
  const CovarianceModel cov(2, {0.25, 0.0, 0.0, 1.0}, 0.0, 0);
  EXPECT_DOUBLE_EQ(mahalanobis_score(std::vector<float>{2, 0}, std::vector<float>{0, 0}, cov), 1.0);
  const std::vector<float> u{4, -1};
  EXPECT_EQ(mahalanobis_score(u, u, cov), 0.0);
}

TEST(Mahalanobis, IdentityEqualsEuclidean) {
  std::mt19937_64 rng(4);
  const auto cov = identity_cov(16);
  for (int t = 0; t < 200; ++t) {
    const auto u = rand_vec(16, rng), v = rand_vec(16, rng);
    EXPECT_NEAR(mahalanobis_score(u, v, cov), euclidean_score(u, v), 1e-9);
  }
}

TEST(Mahalanobis, WhiteningAgreesWithDirectForm) {
  const auto s = gaussian_set(300, 6, 8);
  const auto cov = fit_covariance(s);
  for (std::size_t i = 0; i + 1 < 20; ++i) {
    const auto a = cov.whiten(s[i].vector), b = cov.whiten(s[i + 1].vector);
    double acc = 0;
    for (std::size_t k = 0; k < 6; ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    EXPECT_NEAR(std::sqrt(acc), mahalanobis_score(s[i].vector, s[i + 1].vector, cov), 1e-9);
  }
}

TEST(Mahalanobis, MetricAxioms) {
  const auto s = gaussian_set(200, 5, 9);
  const auto cov = fit_covariance(s);
  std::mt19937_64 rng(10);
  for (int t = 0; t < 200; ++t) {
    const auto x = rand_vec(5, rng), y = rand_vec(5, rng), z = rand_vec(5, rng);
    for (auto f : {+[](const std::vector<float>& a, const std::vector<float>& b, const CovarianceModel&) {
                     return euclidean_score(a, b);
                   },
                   +[](const std::vector<float>& a, const std::vector<float>& b, const CovarianceModel& c) {
                     return mahalanobis_score(a, b, c);
                   }}) {
      EXPECT_GE(f(x, y, cov), 0.0);
      EXPECT_NEAR(f(x, y, cov), f(y, x, cov), 1e-12);
      EXPECT_EQ(f(x, x, cov), 0.0);
      EXPECT_LE(f(x, z, cov), f(x, y, cov) + f(y, z, cov) + 1e-6);
    }
  }
}

TEST(Mahalanobis, InvariantUnderLinearMaps) {
  const std::size_t d = 4;
  const auto s = gaussian_set(4000, d, 11);
  // well-conditioned upper-triangular map
  const double m[4][4] = {{2, 0.5, 0, 0.1}, {0, 1.5, 0.3, 0}, {0, 0, 1, -0.4}, {0, 0, 0, 0.8}};
  EmbeddingSet t(d);
  for (const auto& r : s.records()) {
    std::vector<float> y(d, 0.f);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0;
      for (std::size_t j = 0; j < d; ++j) acc += m[i][j] * r.vector[j];
      y[i] = static_cast<float>(acc);
    }
    t.add({r.id, r.view, r.class_label, y});
  }
  const auto cs = fit_covariance(s, 0.0), ct = fit_covariance(t, 0.0);
  for (std::size_t i = 0; i < 50; ++i) {
    const double a = mahalanobis_score(s[i].vector, s[i + 50].vector, cs);
    const double b = mahalanobis_score(t[i].vector, t[i + 50].vector, ct);
    EXPECT_NEAR(a, b, 1e-5 * a);
  }
}

TEST(Contrastive, TermExamples) {
  EXPECT_DOUBLE_EQ(contrastive_term(4.0, 0, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(contrastive_term(0.25, 1, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(contrastive_term(1.0, 1, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(contrastive_term(3.0, 1, 1.0), 0.0);
}

TEST(Contrastive, TermGradientSigns) {
  for (double sq : {0.1, 0.4, 0.9, 2.0}) {
    for (int label : {0, 1}) {
      const double num = (contrastive_term(sq + 1e-4, label, 1.0) - contrastive_term(sq - 1e-4, label, 1.0)) / 2e-4;
      EXPECT_NEAR(contrastive_term_grad(sq, label, 1.0), num, 1e-9);
    }
  }
  EXPECT_EQ(contrastive_term_grad(0.5, 0, 1.0), 1.0);
  EXPECT_EQ(contrastive_term_grad(0.5, 1, 1.0), -1.0);
}

TEST(Contrastive, ZeroInitLossIsDissimilarFraction) {
  const ContrastiveModel m(4, 3, 1.0, 0, true);
  std::mt19937_64 rng(1);
  std::vector<std::vector<float>> vs;
  for (int i = 0; i < 10; ++i) vs.push_back(rand_vec(4, rng));
  std::vector<LabeledPair> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({vs[2 * i], vs[2 * i + 1], i < 2 ? 1 : 0});
  EXPECT_DOUBLE_EQ(contrastive_loss(batch, m), 2.0 / 5.0);
  EXPECT_EQ(m.distance(vs[0], vs[1]), 0.0);
}

TEST(Contrastive, DistanceUsesPerViewProjections) {
  ContrastiveModel m(2, 1, 1.0, 0, true);
  m.params = {1.f, 0.f, 0.f, 2.f};  // W_g = [1 0], W_a = [0 2]
  EXPECT_DOUBLE_EQ(m.distance(std::vector<float>{3, 9}, std::vector<float>{9, 1}), 1.0);
}

struct ContrastiveFixture {
  EmbeddingSet data, train, val;
  std::vector<PairSample> tp, vp;
  ContrastiveFixture() {
    SyntheticConfig cfg;
    cfg.n_classes = 4;
    cfg.per_class = 20;
    cfg.dim = 32;
    cfg.seed = 42;
    data = generate_synthetic(cfg);
    std::tie(train, val) = split(data, 0.8, 42);
    tp = make_pairs(train, {}, 1);
    vp = make_pairs(val, {}, 2);
  }
};

TEST(Contrastive, TrainingSeparatesClasses) {
  ContrastiveFixture f;
  ContrastiveConfig cfg;
  cfg.embed_dim = 16;
  cfg.epochs = 15;
  cfg.samples_per_epoch = 1024;
  cfg.learning_rate = 3e-3;
  cfg.seed = 42;
  const auto m = train_contrastive(f.tp, f.vp, f.data, cfg);
  double sim = 0, dis = 0;
  int ns = 0, nd = 0;
  for (const auto& p : f.vp) {
    const double d = m.distance(f.data.at(p.ground_id).vector, f.data.at(p.aerial_id).vector);
    (p.label == 0 ? sim : dis) += d;
    (p.label == 0 ? ns : nd) += 1;
  }
  EXPECT_LT(sim / ns, dis / nd);
  EXPECT_EQ(m.epochs, 15u);
  EXPECT_DOUBLE_EQ(m.final_val_loss, contrastive_pair_loss(m, f.vp, f.data));
}

TEST(Contrastive, TrainingDeterministic) {
  ContrastiveFixture f;
  ContrastiveConfig cfg;
  cfg.embed_dim = 8;
  cfg.epochs = 2;
  cfg.samples_per_epoch = 200;
  cfg.seed = 5;
  EXPECT_EQ(train_contrastive(f.tp, f.vp, f.data, cfg).params, train_contrastive(f.tp, f.vp, f.data, cfg).params);
}

TEST(Classify, StrictThreshold) {
  EXPECT_EQ(classify(0.3), Decision::similar);
  EXPECT_EQ(classify(0.5), Decision::dissimilar);
  EXPECT_EQ(classify(0.7), Decision::dissimilar);
  EXPECT_EQ(classify(2.0, 2.5), Decision::similar);
  EXPECT_THROW(classify(0.1, NAN), InvalidArgument);
}

Matcher reload(const Matcher& m) {
  std::stringstream ss;
  nn::write_model_file(m.to_file(), ss);
  return Matcher::from_file(nn::read_model_file(ss));
}

TEST(Matcher, PersistenceRoundTripEveryKind) {
  std::mt19937_64 rng(6);
  const auto u = rand_vec(16, rng), v = rand_vec(16, rng);
  const auto data = gaussian_set(100, 16, 3);
  const std::vector<Matcher> ms{Matcher::euclidean(), Matcher::mahalanobis(fit_covariance(data)),
                                Matcher::contrastive(ContrastiveModel(16, 4, 1.0, 2)),
                                Matcher::dml(build_model({1}, 16, {4, {8}}, 3))};
  for (const auto& m : ms) {
    const auto back = reload(m);
    EXPECT_EQ(back.name(), m.name());
    EXPECT_EQ(back.kind(), m.kind());
    EXPECT_NEAR(back.score(u, v), m.score(u, v), 1e-5 * (1 + m.score(u, v))) << m.name();
    const auto f = m.to_file();
    EXPECT_TRUE(f.manifest.contains("arch"));
    EXPECT_TRUE(f.manifest.contains("seed"));
    EXPECT_TRUE(f.manifest.contains("epochs"));
  }
}

TEST(Matcher, ScoresAndThresholds) {
  std::mt19937_64 rng(7);
  const auto u = rand_vec(16, rng), v = rand_vec(16, rng);
  const auto e = Matcher::euclidean();
  EXPECT_EQ(e.score(u, u), 0.0);
  EXPECT_FALSE(e.default_threshold());
  const auto d = Matcher::dml(build_model({1}, 16));
  const double s = d.score(u, v);
  EXPECT_GT(s, 0.0);
  EXPECT_LT(s, 1.0);
  EXPECT_EQ(*d.default_threshold(), 0.5);
  EXPECT_FALSE(d.has_encoding());
  EXPECT_THROW(d.encode(View::ground, u), InvalidArgument);
  EXPECT_EQ(d.name(), "dml-s");
}

TEST(Matcher, UnknownKindRejected) {
  nn::ModelFile f;
  f.manifest = {{"format", "CVIR-MODEL"}, {"kind", "cosine"}};
  EXPECT_THROW(Matcher::from_file(f), InvalidArgument);
}

}  // namespace
}  // namespace cvir
