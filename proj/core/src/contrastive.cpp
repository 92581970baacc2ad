#include <algorithm>
#include <cmath>
#include <random>

#include "cvir/error.hpp"
#include "cvir/matchers.hpp"
#include "cvir/nn/kernels.hpp"
#include "cvir/nn/optimizer.hpp"

namespace cvir {

ContrastiveModel::ContrastiveModel(std::size_t dim_, std::size_t embed_dim_, double margin_, std::uint64_t seed_,
                                   bool zero_init)
    : dim(dim_), embed_dim(embed_dim_), margin(margin_), seed(seed_) {
  if (dim == 0 || embed_dim == 0) throw InvalidArgument("contrastive model needs positive d and e");
  if (!(margin > 0.0) || !std::isfinite(margin)) throw InvalidArgument("contrastive margin must be > 0");
  params.assign(2 * embed_dim * dim, 0.0f);
  if (zero_init) return;
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& w : params) w = static_cast<float>(dist(rng));
}

std::vector<double> ContrastiveModel::project(View view, std::span<const float> x) const {
  if (x.size() != dim) {
    throw ShapeError("contrastive model expects d=" + std::to_string(dim) + ", got " + std::to_string(x.size()));
  }
  const auto w = view == View::ground ? ground_weights() : aerial_weights();
  std::vector<double> out(embed_dim, 0.0);
  for (std::size_t r = 0; r < embed_dim; ++r) {
    const float* row = w.data() + r * dim;
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) acc += static_cast<double>(row[c]) * static_cast<double>(x[c]);
    out[r] = acc;
  }
  return out;
}

double ContrastiveModel::distance(std::span<const float> ground, std::span<const float> aerial) const {
  const auto p = project(View::ground, ground);
  const auto q = project(View::aerial, aerial);
  double acc = 0.0;
  for (std::size_t i = 0; i < embed_dim; ++i) acc += (p[i] - q[i]) * (p[i] - q[i]);
  return std::sqrt(acc);
}

double contrastive_term(double squared_distance, int label, double margin) {
  if (label == 0) return squared_distance;
  return std::max(0.0, margin - squared_distance);
}

double contrastive_term_grad(double squared_distance, int label, double margin) {
  if (label == 0) return 1.0;
  return squared_distance < margin ? -1.0 : 0.0;
}

double contrastive_loss(std::span<const LabeledPair> batch, const ContrastiveModel& model) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : batch) {
    if (p.label != 0 && p.label != 1) throw InvalidArgument("pair labels must be 0 or 1");
    const double d = model.distance(p.ground, p.aerial);
    total += contrastive_term(d * d, p.label, model.margin);
  }
  return total / static_cast<double>(batch.size());
}

namespace {

std::vector<LabeledPair> resolve(std::span<const PairSample> pairs, const EmbeddingSet& embeddings) {
  std::vector<LabeledPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto& g = embeddings.at(p.ground_id);
    const auto& a = embeddings.at(p.aerial_id);
    if (g.view != View::ground || a.view != View::aerial)
      throw InvalidArgument("pair (" + p.ground_id + ", " + p.aerial_id + ") is not ground/aerial ordered");
    if (p.label != 0 && p.label != 1) throw InvalidArgument("pair labels must be 0 or 1");
    out.push_back({g.vector, a.vector, p.label});
  }
  return out;
}

}  // namespace

double contrastive_pair_loss(const ContrastiveModel& model, std::span<const PairSample> pairs,
                             const EmbeddingSet& embeddings) {
  const auto resolved = resolve(pairs, embeddings);
  return contrastive_loss(resolved, model);
}

ContrastiveModel train_contrastive(std::span<const PairSample> train, std::span<const PairSample> validation,
                                   const EmbeddingSet& embeddings, const ContrastiveConfig& cfg,
                                   const std::function<void(const ContrastiveEpochLog&)>& on_epoch) {
  if (cfg.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (cfg.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (train.empty()) throw InvalidArgument("no training pairs");

  ContrastiveModel model(embeddings.dim(), cfg.embed_dim, cfg.margin, cfg.seed, cfg.zero_init);
  const auto train_pairs = resolve(train, embeddings);
  const auto val_pairs = resolve(validation, embeddings);

  const std::size_t d = model.dim, e = model.embed_dim, block = e * d;
  std::vector<double> w64(model.params.begin(), model.params.end());
  std::vector<double> grads(2 * block);
  std::vector<double> u(d), v(d), pu(e), pv(e), dr(e);

  auto state = nn::OptimizerState::adam(cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t per_epoch =
      cfg.samples_per_epoch == 0 ? order.size() : std::min(cfg.samples_per_epoch, order.size());

  const std::span<const double> wg(w64.data(), block), wa(w64.data() + block, block);
  const std::span<double> gg(grads.data(), block), ga(grads.data() + block, block);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < per_epoch; start += cfg.batch_size, ++batch) {
      const std::size_t nb = std::min(cfg.batch_size, per_epoch - start);
      std::fill(grads.begin(), grads.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < nb; ++j) {
        const auto& p = train_pairs[order[start + j]];
        std::copy(p.ground.begin(), p.ground.end(), u.begin());
        std::copy(p.aerial.begin(), p.aerial.end(), v.begin());
        nn::dense_forward(u, wg, {}, pu);
        nn::dense_forward(v, wa, {}, pv);
        double sq = 0.0;
        for (std::size_t i = 0; i < e; ++i) sq += (pu[i] - pv[i]) * (pu[i] - pv[i]);
        batch_loss += contrastive_term(sq, p.label, model.margin);
        const double t = contrastive_term_grad(sq, p.label, model.margin);
        if (t == 0.0) continue;
        // d(D^2)/d(pu) = 2 r, d(D^2)/d(pv) = -2 r with r = pu - pv
        for (std::size_t i = 0; i < e; ++i) dr[i] = 2.0 * t * (pu[i] - pv[i]);
        nn::dense_backward(u, wg, dr, {}, gg, {});
        for (auto& x : dr) x = -x;
        nn::dense_backward(v, wa, dr, {}, ga, {});
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("non-finite contrastive loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch));
      }
      const double inv = 1.0 / static_cast<double>(nb);
      for (auto& g : grads) g *= inv;
      nn::optimizer_step(state, model.params, grads);
      for (std::size_t i = 0; i < w64.size(); ++i) w64[i] = model.params[i];
      train_loss += batch_loss;
    }
    train_loss /= static_cast<double>(per_epoch);

    const double val_loss = val_pairs.empty() ? train_loss : contrastive_loss(val_pairs, model);
    if (!std::isfinite(val_loss))
      throw NumericalError("non-finite contrastive validation loss at epoch " + std::to_string(epoch));
    model.epochs = epoch;
    model.final_val_loss = val_loss;
    if (on_epoch) on_epoch({epoch, train_loss, val_loss});
  }
  return model;
}

}  // namespace cvir
