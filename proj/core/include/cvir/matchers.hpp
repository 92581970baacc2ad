#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cvir/deepcvir.hpp"
#include "cvir/feature_store.hpp"
#include "cvir/nn/model_file.hpp"

namespace cvir {

/// L2 distance accumulated in 64-bit. Throws ShapeError on length mismatch.
double euclidean_score(std::span<const float> u, std::span<const float> v);

// --- Mahalanobis -----------------------------------------------------------------

/// Inverse covariance plus a whitening factor M (lower-triangular Cholesky
/// factor of the inverse), so that (u-v)' C^-1 (u-v) = |M'(u-v)|^2.
class CovarianceModel {
 public:
  /// Validates symmetry and positive definiteness of `inverse_covariance`
  /// (row-major dim x dim); throws NumericalError otherwise.
  CovarianceModel(std::size_t dim, std::vector<double> inverse_covariance, double ridge, std::size_t fitted_on);

  std::size_t dim() const { return dim_; }
  double ridge() const { return ridge_; }
  std::size_t fitted_on() const { return fitted_on_; }
  std::span<const double> inverse_covariance() const { return inverse_; }

  /// M' x: Euclidean distances between whitened vectors are Mahalanobis distances.
  std::vector<double> whiten(std::span<const float> x) const;

 private:
  std::size_t dim_;
  std::vector<double> inverse_;
  std::vector<double> factor_;  // M, row-major lower triangle
  double ridge_;
  std::size_t fitted_on_;
};

/// Pooled mean-centred sample covariance of every record plus ridge * I.
/// With no ridge given, uses 1e-3 * trace(C) / d. Throws NumericalError
/// when the ridged covariance is not positive definite.
CovarianceModel fit_covariance(const EmbeddingSet& set, std::optional<double> ridge = std::nullopt);

/// sqrt((u-v)' C^-1 (u-v)), evaluated directly from the inverse.
double mahalanobis_score(std::span<const float> u, std::span<const float> v, const CovarianceModel& cov);

// --- contrastive ---------------------------------------------------------------------

/// One linear projection per view (no weight sharing, no bias).
/// Parameters are [W_g | W_a], each stored [embed_dim][dim] so that the
/// projection of u is W_g u.
struct ContrastiveModel {
  std::size_t dim = 0;
  std::size_t embed_dim = 128;
  double margin = 1.0;
  std::vector<float> params;

  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  double final_val_loss = 0.0;

  ContrastiveModel() = default;
  /// He-uniform initialised (or zero when `zero_init`).
  ContrastiveModel(std::size_t dim, std::size_t embed_dim, double margin, std::uint64_t seed, bool zero_init = false);

  std::span<const float> ground_weights() const { return std::span(params).first(embed_dim * dim); }
  std::span<const float> aerial_weights() const { return std::span(params).subspan(embed_dim * dim); }

  std::vector<double> project(View view, std::span<const float> x) const;
  /// |W_g u - W_a v|.
  double distance(std::span<const float> ground, std::span<const float> aerial) const;
};

/// Label 0 (similar) contributes D^2; label 1 contributes max(0, margin - D^2).
double contrastive_term(double squared_distance, int label, double margin);
/// d(term)/d(D^2): +1 for similar, -1 for an active dissimilar hinge, else 0.
double contrastive_term_grad(double squared_distance, int label, double margin);

struct LabeledPair {
  std::span<const float> ground;
  std::span<const float> aerial;
  int label = 0;
};

/// Mean of contrastive_term over the batch.
double contrastive_loss(std::span<const LabeledPair> batch, const ContrastiveModel& model);

struct ContrastiveConfig {
  std::size_t embed_dim = 128;
  double margin = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  /// Pairs drawn per epoch (reshuffled each epoch); 0 = all.
  std::size_t samples_per_epoch = 0;
  std::uint64_t seed = 0;
  bool zero_init = false;
};

struct ContrastiveEpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

/// Adam on contrastive_loss. Throws NumericalError on a non-finite loss.
ContrastiveModel train_contrastive(std::span<const PairSample> train, std::span<const PairSample> validation,
                                   const EmbeddingSet& embeddings, const ContrastiveConfig& cfg,
                                   const std::function<void(const ContrastiveEpochLog&)>& on_epoch = {});

/// Mean contrastive loss of a pair list under `model`.
double contrastive_pair_loss(const ContrastiveModel& model, std::span<const PairSample> pairs,
                             const EmbeddingSet& embeddings);

// --- unified matcher -------------------------------------------------------------------

enum class MatcherKind { euclidean, mahalanobis, contrastive, dml };

/// A fitted scoring model. score() is a dissimilarity: lower = more similar.
/// The first argument is always the ground-view vector, the second the
/// aerial-view vector; DML scores are not symmetric.
class Matcher {
 public:
  static Matcher euclidean();
  static Matcher mahalanobis(CovarianceModel model);
  static Matcher contrastive(ContrastiveModel model);
  static Matcher dml(DMLModel model);

  MatcherKind kind() const;
  /// "euclidean", "mahalanobis", "contrastive", "dml-s", "dml-d", "dml-t".
  std::string name() const;
  /// Required input dimension, or 0 when any dimension is accepted.
  std::size_t dim() const;

  double score(std::span<const float> ground, std::span<const float> aerial) const;

  /// Linear matchers map each vector into a space where the score is the
  /// Euclidean distance; DML has no such encoding.
  bool has_encoding() const { return kind() != MatcherKind::dml; }
  std::vector<double> encode(View view, std::span<const float> x) const;

  /// Default decision threshold: 0.5 for DML, none for unbounded distances.
  std::optional<double> default_threshold() const;

  const DMLModel* dml_model() const { return std::get_if<DMLModel>(&model_); }
  const CovarianceModel* covariance_model() const { return std::get_if<CovarianceModel>(&model_); }
  const ContrastiveModel* contrastive_model() const { return std::get_if<ContrastiveModel>(&model_); }

  nn::ModelFile to_file() const;
  static Matcher from_file(const nn::ModelFile& file);
  void save(const std::filesystem::path& path) const;
  static Matcher load(const std::filesystem::path& path);

 private:
  struct Euclidean {};
  using Model = std::variant<Euclidean, CovarianceModel, ContrastiveModel, DMLModel>;
  explicit Matcher(Model model) : model_(std::move(model)) {}

  Model model_;
};

enum class Decision { similar, dissimilar };

/// similar iff score < threshold (strict).
Decision classify(double score, double threshold = 0.5);

}  // namespace cvir
