#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvir/feature_store.hpp"
#include "cvir/nn/kernels.hpp"
#include "cvir/nn/model_file.hpp"
#include "cvir/nn/sequential.hpp"
#include "cvir/nn/tensor.hpp"

namespace cvir {

/// Residual-block count (S=1, D=2, T=3) and the activation used throughout.
struct DMLVariant {
  int depth = 1;
  nn::Activation activation = nn::Activation::leaky_relu;

  char letter() const;
  /// "dml-s", "dml-d", "dml-t".
  std::string name() const;
  friend bool operator==(const DMLVariant&, const DMLVariant&) = default;
};

/// Accepts "s|d|t" or "dml-s|dml-d|dml-t" (case-insensitive).
int parse_dml_depth(std::string_view text);

/// Widths that the figure-level description leaves open.
struct DmlArchitecture {
  std::size_t base_filters = 16;
  std::vector<std::size_t> head_units{256, 64};

  friend bool operator==(const DmlArchitecture&, const DmlArchitecture&) = default;
};

/// Side length s of the s x s grid for a d-vector; throws InvalidArgument
/// when d is not a perfect square.
std::size_t grid_side(std::size_t dim);

/// Row-major: element i lands at (i / s, i % s).
nn::Tensor reshape_1d_to_2d(std::span<const float> vec);
/// [s, s, 2] with channel 0 = ground, channel 1 = aerial.
nn::Tensor stack_pair(const nn::Tensor& ground, const nn::Tensor& aerial);

/// Stem conv + `depth` x (identity unit, projection unit) + global average
/// pool + dense head + sigmoid.
std::vector<nn::LayerSpec> dml_layer_specs(const DMLVariant& variant, const DmlArchitecture& arch = {});

struct TrainingMeta {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::uint64_t seed = 0;
};

class DMLModel {
 public:
  DMLModel(DMLVariant variant, std::size_t dim, DmlArchitecture arch = {}, std::uint64_t seed = 0);

  const DMLVariant& variant() const { return variant_; }
  std::size_t dim() const { return dim_; }
  const DmlArchitecture& architecture() const { return arch_; }
  const nn::Sequential& network() const { return net_; }
  std::size_t param_count() const { return net_.param_count(); }

  std::span<const float> params() const { return params_; }
  void set_params(std::vector<float> params);

  TrainingMeta meta;

  /// Pre-sigmoid output for a (ground, aerial) pair.
  double logit(std::span<const float> ground, std::span<const float> aerial, nn::Tape& tape) const;
  /// Probability that the pair is dissimilar; below 0.5 means "similar".
  double score(std::span<const float> ground, std::span<const float> aerial) const;

  /// Network input for a pair: interleaved HWC channels (ground, aerial).
  std::vector<double> make_input(std::span<const float> ground, std::span<const float> aerial) const;

  nn::ModelFile to_file() const;
  static DMLModel from_file(const nn::ModelFile& file);

 private:
  DMLVariant variant_;
  std::size_t dim_;
  DmlArchitecture arch_;
  nn::Sequential net_;
  std::vector<float> params_;
  std::vector<double> params64_;
};

DMLModel build_model(const DMLVariant& variant, std::size_t dim = 1024, const DmlArchitecture& arch = {},
                     std::uint64_t seed = 0);

double dml_score(const DMLModel& model, std::span<const float> ground, std::span<const float> aerial);

struct LrDecay {
  std::size_t patience = 5;
  double factor = 0.5;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t early_stopping_patience = 15;
  std::optional<LrDecay> lr_decay;
  std::uint64_t seed = 0;
  /// Pairs drawn (without replacement, reshuffled every epoch) per epoch; 0 = all.
  std::size_t samples_per_epoch = 2048;
  /// Leading validation pairs scored after every epoch; 0 = all.
  std::size_t validation_samples = 1024;
  std::size_t threads = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
};

struct PairEvaluation {
  double loss = 0.0;      // mean BCE
  double accuracy = 0.0;  // fraction classified correctly at 0.5
};

PairEvaluation evaluate_pairs(const DMLModel& model, std::span<const PairSample> pairs,
                              const EmbeddingSet& embeddings, std::size_t threads = 0);

/// Mini-batch Adam on fused sigmoid-BCE (target = pair label, 1 = dissimilar),
/// early stopping on validation loss, returns the best-validation weights.
DMLModel train_dml(DMLModel model, std::span<const PairSample> train, std::span<const PairSample> validation,
                   const EmbeddingSet& embeddings, const TrainConfig& cfg,
                   const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace cvir
