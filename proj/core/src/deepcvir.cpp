#include "cvir/deepcvir.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "cvir/error.hpp"
#include "cvir/nn/optimizer.hpp"
#include "cvir/parallel.hpp"

namespace cvir {

char DMLVariant::letter() const {
  switch (depth) {
    case 1: return 'S';
    case 2: return 'D';
    case 3: return 'T';
  }
  return '?';
}

std::string DMLVariant::name() const {
  return std::string("dml-") + static_cast<char>(std::tolower(letter()));
}

int parse_dml_depth(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t.starts_with("dml-")) t = t.substr(4);
  if (t == "s") return 1;
  if (t == "d") return 2;
  if (t == "t") return 3;
  throw InvalidArgument("unknown DML variant '" + std::string(text) + "' (expected dml-s|dml-d|dml-t)");
}

std::size_t grid_side(std::size_t dim) {
  auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  while (s * s > dim) --s;
  while ((s + 1) * (s + 1) <= dim) ++s;
  if (dim == 0 || s * s != dim) {
    throw InvalidArgument("DML needs a perfect-square feature dimension, got d=" + std::to_string(dim));
  }
  return s;
}

nn::Tensor reshape_1d_to_2d(std::span<const float> vec) {
  const auto s = grid_side(vec.size());
  return nn::Tensor({s, s}, std::vector<float>(vec.begin(), vec.end()));
}

nn::Tensor stack_pair(const nn::Tensor& ground, const nn::Tensor& aerial) {
  if (ground.shape() != aerial.shape() || ground.rank() != 2) {
    throw ShapeError("stack_pair needs two equal 2-D grids, got " + nn::shape_string(ground.shape()) + " and " +
                     nn::shape_string(aerial.shape()));
  }
  const auto h = ground.shape()[0], w = ground.shape()[1];
  nn::Tensor out({h, w, 2});
  for (std::size_t i = 0; i < h * w; ++i) {
    out[2 * i] = ground[i];
    out[2 * i + 1] = aerial[i];
  }
  return out;
}

std::vector<nn::LayerSpec> dml_layer_specs(const DMLVariant& variant, const DmlArchitecture& arch) {
  if (variant.depth < 1 || variant.depth > 3) throw InvalidArgument("DML depth must be 1, 2 or 3");
  if (arch.base_filters == 0) throw InvalidArgument("base_filters must be positive");
  using nn::LayerSpec;
  const auto act = variant.activation;
  std::vector<LayerSpec> specs{LayerSpec::conv2d(arch.base_filters, 3, 1), LayerSpec::act(act)};
  std::size_t filters = arch.base_filters;
  for (int b = 0; b < variant.depth; ++b) {
    specs.push_back(LayerSpec::residual_identity(filters, act));
    specs.push_back(LayerSpec::residual_projection(2 * filters, 2, act));
    filters *= 2;
  }
  specs.push_back(LayerSpec::global_avg_pool());
  for (auto units : arch.head_units) {
    specs.push_back(LayerSpec::dense(units));
    specs.push_back(LayerSpec::act(act));
  }
  specs.push_back(LayerSpec::dense(1));
  specs.push_back(LayerSpec::sigmoid());
  return specs;
}

// --- DMLModel ------------------------------------------------------------------------------

DMLModel::DMLModel(DMLVariant variant, std::size_t dim, DmlArchitecture arch, std::uint64_t seed)
    : variant_(variant), dim_(dim), arch_(std::move(arch)) {
  const auto s = grid_side(dim);
  net_ = nn::Sequential({s, s, 2}, dml_layer_specs(variant_, arch_));
  meta.seed = seed;
  set_params(net_.init_params(seed));
}

void DMLModel::set_params(std::vector<float> params) {
  if (params.size() != net_.param_count()) {
    throw ShapeError("DML model expects " + std::to_string(net_.param_count()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  params_ = std::move(params);
  params64_ = nn::widen(params_);
}

std::vector<double> DMLModel::make_input(std::span<const float> ground, std::span<const float> aerial) const {
  if (ground.size() != dim_ || aerial.size() != dim_) {
    throw ShapeError("DML model expects two " + std::to_string(dim_) + "-d vectors, got " +
                     std::to_string(ground.size()) + " and " + std::to_string(aerial.size()));
  }
  std::vector<double> input(2 * dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    input[2 * i] = ground[i];
    input[2 * i + 1] = aerial[i];
  }
  return input;
}

double DMLModel::logit(std::span<const float> ground, std::span<const float> aerial, nn::Tape& tape) const {
  return net_.forward(params64_, make_input(ground, aerial), tape)[0];
}

double DMLModel::score(std::span<const float> ground, std::span<const float> aerial) const {
  nn::Tape tape;
  return nn::sigmoid(logit(ground, aerial, tape));
}

nn::ModelFile DMLModel::to_file() const {
  nn::ModelFile file;
  auto& m = file.manifest;
  m["format"] = "CVIR-MODEL";
  m["version"] = 1;
  m["kind"] = "dml";
  m["variant"] = variant_.name();
  m["activation"] = nn::to_string(variant_.activation);
  m["dim"] = dim_;
  m["base_filters"] = arch_.base_filters;
  m["head_units"] = arch_.head_units;
  auto arch = nlohmann::ordered_json::array();
  for (const auto& spec : net_.specs()) arch.push_back(nn::to_json(spec));
  m["arch"] = std::move(arch);
  m["seed"] = meta.seed;
  m["epochs"] = meta.epochs_run;
  m["best_epoch"] = meta.best_epoch;
  m["best_val_loss"] = meta.best_val_loss;
  file.params = params_;
  return file;
}

DMLModel DMLModel::from_file(const nn::ModelFile& file) {
  const auto& m = file.manifest;
  try {
    if (m.at("kind").get<std::string>() != "dml") throw InvalidArgument("model file is not a DML model");
    DMLVariant variant{parse_dml_depth(m.at("variant").get<std::string>()),
                       nn::parse_activation(m.at("activation").get<std::string>())};
    DmlArchitecture arch{m.at("base_filters").get<std::size_t>(),
                         m.at("head_units").get<std::vector<std::size_t>>()};
    DMLModel model(variant, m.at("dim").get<std::size_t>(), arch, m.at("seed").get<std::uint64_t>());
    std::vector<nn::LayerSpec> stored;
    for (const auto& j : m.at("arch")) stored.push_back(nn::layer_spec_from_json(j));
    if (stored != model.net_.specs()) throw InvalidArgument("model arch does not match its declared variant");
    model.set_params(file.params);
    model.meta.epochs_run = m.value("epochs", std::size_t{0});
    model.meta.best_epoch = m.value("best_epoch", std::size_t{0});
    model.meta.best_val_loss = m.value("best_val_loss", 0.0);
    return model;
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("malformed DML manifest: ") + ex.what());
  }
}

DMLModel build_model(const DMLVariant& variant, std::size_t dim, const DmlArchitecture& arch, std::uint64_t seed) {
  return DMLModel(variant, dim, arch, seed);
}

double dml_score(const DMLModel& model, std::span<const float> ground, std::span<const float> aerial) {
  return model.score(ground, aerial);
}

// --- training -----------------------------------------------------------------------------------

namespace {

struct ResolvedPair {
  const EmbeddingRecord* ground;
  const EmbeddingRecord* aerial;
  double target;
};

std::vector<ResolvedPair> resolve(std::span<const PairSample> pairs, const EmbeddingSet& embeddings) {
  std::vector<ResolvedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto& g = embeddings.at(p.ground_id);
    const auto& a = embeddings.at(p.aerial_id);
    if (g.view != View::ground || a.view != View::aerial)
      throw InvalidArgument("pair (" + p.ground_id + ", " + p.aerial_id + ") is not ground/aerial ordered");
    if (p.label != 0 && p.label != 1) throw InvalidArgument("pair labels must be 0 or 1");
    out.push_back({&g, &a, static_cast<double>(p.label)});
  }
  return out;
}

PairEvaluation evaluate_resolved(const DMLModel& model, std::span<const ResolvedPair> pairs, std::size_t threads) {
  std::vector<double> losses(pairs.size());
  std::vector<char> correct(pairs.size());
  parallel_for(
      pairs.size(),
      [&](std::size_t i) {
        nn::Tape tape;
        const double z = model.logit(pairs[i].ground->vector, pairs[i].aerial->vector, tape);
        losses[i] = nn::bce_with_logits(z, pairs[i].target);
        const double predicted = nn::sigmoid(z) < 0.5 ? 0.0 : 1.0;
        correct[i] = predicted == pairs[i].target;
      },
      threads);
  PairEvaluation ev;
  if (pairs.empty()) return ev;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ev.loss += losses[i];
    ev.accuracy += correct[i];
  }
  ev.loss /= static_cast<double>(pairs.size());
  ev.accuracy /= static_cast<double>(pairs.size());
  return ev;
}

}  // namespace

PairEvaluation evaluate_pairs(const DMLModel& model, std::span<const PairSample> pairs,
                              const EmbeddingSet& embeddings, std::size_t threads) {
  const auto resolved = resolve(pairs, embeddings);
  return evaluate_resolved(model, resolved, threads);
}

DMLModel train_dml(DMLModel model, std::span<const PairSample> train, std::span<const PairSample> validation,
                   const EmbeddingSet& embeddings, const TrainConfig& cfg,
                   const std::function<void(const EpochLog&)>& on_epoch) {
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (cfg.early_stopping_patience < 1) throw InvalidArgument("early stopping patience must be >= 1");
  if (cfg.max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (train.empty()) throw InvalidArgument("no training pairs");
  if (validation.empty()) throw InvalidArgument("no validation pairs");
  if (embeddings.dim() != model.dim()) {
    throw ShapeError("embeddings have d=" + std::to_string(embeddings.dim()) + " but the model expects d=" +
                     std::to_string(model.dim()));
  }

  const auto train_pairs = resolve(train, embeddings);
  auto val_pairs = resolve(validation, embeddings);
  if (cfg.validation_samples > 0 && val_pairs.size() > cfg.validation_samples)
    val_pairs.resize(cfg.validation_samples);

  const auto& net = model.network();
  const std::size_t n_params = model.param_count();
  std::vector<float> params(model.params().begin(), model.params().end());
  std::vector<double> params64 = nn::widen(params);

  auto state = nn::OptimizerState::adam(cfg.learning_rate);
  std::optional<nn::PlateauDecay> decay;
  if (cfg.lr_decay) decay.emplace(cfg.lr_decay->patience, cfg.lr_decay->factor);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t per_epoch =
      cfg.samples_per_epoch == 0 ? order.size() : std::min(cfg.samples_per_epoch, order.size());

  // One gradient buffer and tape per batch slot; slots are summed in order so
  // the result does not depend on the worker count.
  std::vector<std::vector<double>> slot_grads(cfg.batch_size, std::vector<double>(n_params));
  std::vector<nn::Tape> slot_tapes(cfg.batch_size);
  std::vector<double> slot_loss(cfg.batch_size);
  std::vector<double> grads(n_params);

  std::vector<float> best_params = params;
  double best_val = INFINITY;
  std::size_t best_epoch = 0, epoch = 0;

  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < per_epoch; start += cfg.batch_size, ++batch) {
      const std::size_t nb = std::min(cfg.batch_size, per_epoch - start);
      parallel_for(
          nb,
          [&](std::size_t j) {
            const auto& pair = train_pairs[order[start + j]];
            auto& g = slot_grads[j];
            std::fill(g.begin(), g.end(), 0.0);
            const auto input = model.make_input(pair.ground->vector, pair.aerial->vector);
            const double z = net.forward(params64, input, slot_tapes[j])[0];
            slot_loss[j] = nn::bce_with_logits(z, pair.target);
            const double dz = nn::bce_with_logits_grad(z, pair.target);
            net.backward(params64, slot_tapes[j], std::span<const double>(&dz, 1), g);
          },
          cfg.threads);

      std::fill(grads.begin(), grads.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < nb; ++j) {
        batch_loss += slot_loss[j];
        const auto& g = slot_grads[j];
        for (std::size_t i = 0; i < n_params; ++i) grads[i] += g[i];
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch));
      }
      const double inv = 1.0 / static_cast<double>(nb);
      for (auto& g : grads) g *= inv;
      nn::optimizer_step(state, params, grads);
      for (std::size_t i = 0; i < n_params; ++i) params64[i] = params[i];
      train_loss += batch_loss;
    }
    train_loss /= static_cast<double>(per_epoch);

    model.set_params(params);
    const auto val = evaluate_resolved(model, val_pairs, cfg.threads);
    if (!std::isfinite(val.loss))
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));

    if (on_epoch) on_epoch({epoch, train_loss, val.loss, val.accuracy, state.learning_rate});

    if (val.loss < best_val) {
      best_val = val.loss;
      best_epoch = epoch;
      best_params = params;
    }
    if (decay) decay->observe(val.loss, state);
    if (epoch - best_epoch >= cfg.early_stopping_patience) break;
  }

  model.set_params(std::move(best_params));
  model.meta.epochs_run = std::min(epoch, cfg.max_epochs);
  model.meta.best_epoch = best_epoch;
  model.meta.best_val_loss = best_val;
  return model;
}

}  // namespace cvir
