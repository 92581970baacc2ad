#include "cvir/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace cvir::nn {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale <= floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t begin, std::size_t count, std::size_t wanted,
                                        std::mt19937_64& rng) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  if (count > wanted) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(wanted);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

GradCheckReport gradient_check(const Sequential& model, std::span<const float> params,
                               std::span<const double> input, std::span<const double> targets,
                               const GradCheckOptions& options) {
  auto p = widen(params);
  std::vector<double> x(input.begin(), input.end());
  Tape tape;

  auto out = model.forward(p, x, tape);
  std::vector<double> dout(out.size());
  model_loss(model, out, targets, dout);
  std::vector<double> grads(p.size(), 0.0), dinput(x.size(), 0.0);
  model.backward(p, tape, dout, grads, dinput);

  auto loss_at = [&] { return model_loss(model, model.forward(p, x, tape), targets); };
  const double h = options.step;
  auto numeric = [&](double& coord) {
    const double saved = coord;
    coord = saved + h;
    const double up = loss_at();
    coord = saved - h;
    const double down = loss_at();
    coord = saved;
    return (up - down) / (2.0 * h);
  };

  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const auto count = model.layer(l).param_count();
    double worst = 0.0;
    for (auto i : sample_indices(model.param_offset(l), count, options.samples_per_layer, rng)) {
      worst = std::max(worst, relative_error(grads[i], numeric(p[i])));
      ++report.coordinates_checked;
    }
    report.per_layer.push_back(worst);
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  for (auto i : sample_indices(0, x.size(), options.input_samples, rng)) {
    report.input_error = std::max(report.input_error, relative_error(dinput[i], numeric(x[i])));
    ++report.coordinates_checked;
  }
  report.max_relative_error = std::max(report.max_relative_error, report.input_error);
  return report;
}

}  // namespace cvir::nn
