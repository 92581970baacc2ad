#include "cvir/matchers.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cvir/error.hpp"

namespace cvir {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void expect_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                     ")");
  }
}

}  // namespace

double euclidean_score(std::span<const float> u, std::span<const float> v) {
  expect_same_dim(u.size(), v.size(), "euclidean_score");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = static_cast<double>(u[i]) - static_cast<double>(v[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// --- Mahalanobis -----------------------------------------------------------------

CovarianceModel::CovarianceModel(std::size_t dim, std::vector<double> inverse_covariance, double ridge,
                                 std::size_t fitted_on)
    : dim_(dim), inverse_(std::move(inverse_covariance)), ridge_(ridge), fitted_on_(fitted_on) {
  if (dim_ == 0) throw InvalidArgument("covariance model needs d >= 1");
  if (inverse_.size() != dim_ * dim_) {
    throw ShapeError("inverse covariance needs " + std::to_string(dim_ * dim_) + " entries, got " +
                     std::to_string(inverse_.size()));
  }
  if (!(ridge_ >= 0.0)) throw InvalidArgument("ridge must be >= 0");
  Eigen::Map<const RowMatrix> inv(inverse_.data(), static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
  if (!inv.allFinite()) throw NumericalError("inverse covariance has non-finite entries");
  const double scale = inv.cwiseAbs().maxCoeff();
  if ((inv - inv.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw NumericalError("inverse covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(inv);
  if (llt.info() != Eigen::Success) throw NumericalError("inverse covariance is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  factor_.assign(dim_ * dim_, 0.0);
  for (std::size_t r = 0; r < dim_; ++r)
    for (std::size_t c = 0; c <= r; ++c) factor_[r * dim_ + c] = l(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

std::vector<double> CovarianceModel::whiten(std::span<const float> x) const {
  expect_same_dim(x.size(), dim_, "mahalanobis whiten");
  // (L' x)_c = sum_{r >= c} L[r][c] x[r]
  std::vector<double> out(dim_, 0.0);
  for (std::size_t r = 0; r < dim_; ++r) {
    const double xr = x[r];
    const double* row = factor_.data() + r * dim_;
    for (std::size_t c = 0; c <= r; ++c) out[c] += row[c] * xr;
  }
  return out;
}

CovarianceModel fit_covariance(const EmbeddingSet& set, std::optional<double> ridge) {
  const std::size_t d = set.dim();
  const std::size_t n = set.size();
  if (d == 0) throw InvalidArgument("cannot fit a covariance on an empty-dimension set");
  if (n < 2) throw InvalidArgument("covariance fit needs at least 2 records, got " + std::to_string(n));
  if (ridge && !(*ridge >= 0.0)) throw InvalidArgument("ridge must be >= 0");

  const auto di = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), di);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = set[i].vector;
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  const double r = ridge ? *ridge : 1e-3 * cov.trace() / static_cast<double>(d);
  cov.diagonal().array() += r;

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const char* advice = "; use a positive ridge (e.g. --ridge 1e-3)";
  if (llt.info() != Eigen::Success) throw NumericalError(std::string("covariance is singular") + advice);
  const Eigen::VectorXd pivots = Eigen::MatrixXd(llt.matrixL()).diagonal();
  const double scale = std::max(cov.diagonal().maxCoeff(), std::numeric_limits<double>::min());
  if ((pivots.array().square() <= 1e-12 * scale).any() || !pivots.allFinite())
    throw NumericalError(std::string("covariance is numerically singular") + advice);

  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(di, di));
  inv = 0.5 * (inv + inv.transpose());
  std::vector<double> flat(d * d);
  Eigen::Map<RowMatrix>(flat.data(), di, di) = inv;
  return CovarianceModel(d, std::move(flat), r, n);
}

double mahalanobis_score(std::span<const float> u, std::span<const float> v, const CovarianceModel& cov) {
  expect_same_dim(u.size(), v.size(), "mahalanobis_score");
  expect_same_dim(u.size(), cov.dim(), "mahalanobis_score");
  const std::size_t d = cov.dim();
  std::vector<double> diff(d);
  for (std::size_t i = 0; i < d; ++i) diff[i] = static_cast<double>(u[i]) - static_cast<double>(v[i]);
  const auto inv = cov.inverse_covariance();
  double q = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    const double* row = inv.data() + r * d;
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) acc += row[c] * diff[c];
    q += diff[r] * acc;
  }
  return std::sqrt(std::max(q, 0.0));
}

// --- Matcher -------------------------------------------------------------------------

Matcher Matcher::euclidean() { return Matcher(Euclidean{}); }
Matcher Matcher::mahalanobis(CovarianceModel model) { return Matcher(std::move(model)); }
Matcher Matcher::contrastive(ContrastiveModel model) { return Matcher(std::move(model)); }
Matcher Matcher::dml(DMLModel model) { return Matcher(std::move(model)); }

MatcherKind Matcher::kind() const {
  switch (model_.index()) {
    case 0: return MatcherKind::euclidean;
    case 1: return MatcherKind::mahalanobis;
    case 2: return MatcherKind::contrastive;
    default: return MatcherKind::dml;
  }
}

std::string Matcher::name() const {
  switch (kind()) {
    case MatcherKind::euclidean: return "euclidean";
    case MatcherKind::mahalanobis: return "mahalanobis";
    case MatcherKind::contrastive: return "contrastive";
    case MatcherKind::dml: return std::get<DMLModel>(model_).variant().name();
  }
  return "unknown";
}

std::size_t Matcher::dim() const {
  switch (kind()) {
    case MatcherKind::euclidean: return 0;
    case MatcherKind::mahalanobis: return std::get<CovarianceModel>(model_).dim();
    case MatcherKind::contrastive: return std::get<ContrastiveModel>(model_).dim;
    case MatcherKind::dml: return std::get<DMLModel>(model_).dim();
  }
  return 0;
}

double Matcher::score(std::span<const float> ground, std::span<const float> aerial) const {
  switch (kind()) {
    case MatcherKind::euclidean: return euclidean_score(ground, aerial);
    case MatcherKind::mahalanobis: return mahalanobis_score(ground, aerial, std::get<CovarianceModel>(model_));
    case MatcherKind::contrastive: return std::get<ContrastiveModel>(model_).distance(ground, aerial);
    case MatcherKind::dml: return std::get<DMLModel>(model_).score(ground, aerial);
  }
  return 0.0;
}

std::vector<double> Matcher::encode(View view, std::span<const float> x) const {
  switch (kind()) {
    case MatcherKind::euclidean: return std::vector<double>(x.begin(), x.end());
    case MatcherKind::mahalanobis: return std::get<CovarianceModel>(model_).whiten(x);
    case MatcherKind::contrastive: return std::get<ContrastiveModel>(model_).project(view, x);
    case MatcherKind::dml: break;
  }
  throw InvalidArgument("the " + name() + " matcher has no vector encoding");
}

std::optional<double> Matcher::default_threshold() const {
  if (kind() == MatcherKind::dml) return 0.5;
  return std::nullopt;
}

nn::ModelFile Matcher::to_file() const {
  if (const auto* dml = dml_model()) return dml->to_file();
  nn::ModelFile file;
  auto& m = file.manifest;
  m["format"] = "CVIR-MODEL";
  m["version"] = 1;
  m["kind"] = name();
  switch (kind()) {
    case MatcherKind::euclidean:
      m["arch"] = nlohmann::ordered_json::array();
      m["seed"] = 0;
      m["epochs"] = 0;
      break;
    case MatcherKind::mahalanobis: {
      const auto& cov = std::get<CovarianceModel>(model_);
      m["dim"] = cov.dim();
      m["ridge"] = cov.ridge();
      m["fitted_on"] = cov.fitted_on();
      m["arch"] = nlohmann::ordered_json::array();
      m["seed"] = 0;
      m["epochs"] = 0;
      m["blob"] = "inverse_covariance";
      const auto inv = cov.inverse_covariance();
      file.params.assign(inv.begin(), inv.end());
      break;
    }
    case MatcherKind::contrastive: {
      const auto& c = std::get<ContrastiveModel>(model_);
      m["dim"] = c.dim;
      m["embed_dim"] = c.embed_dim;
      m["margin"] = c.margin;
      nlohmann::ordered_json arch = nlohmann::ordered_json::array();
      for (const char* view : {"ground", "aerial"}) {
        arch.push_back({{"kind", "linear_projection"}, {"view", view}, {"in", c.dim}, {"out", c.embed_dim}});
      }
      m["arch"] = std::move(arch);
      m["seed"] = c.seed;
      m["epochs"] = c.epochs;
      m["final_val_loss"] = c.final_val_loss;
      file.params = c.params;
      break;
    }
    case MatcherKind::dml: break;
  }
  return file;
}

Matcher Matcher::from_file(const nn::ModelFile& file) {
  const auto& m = file.manifest;
  try {
    if (m.value("format", std::string()) != "CVIR-MODEL") throw InvalidArgument("not a CVIR model file");
    const auto kind = m.at("kind").get<std::string>();
    if (kind == "dml") return Matcher::dml(DMLModel::from_file(file));
    if (kind == "euclidean") return Matcher::euclidean();
    if (kind == "mahalanobis") {
      const auto d = m.at("dim").get<std::size_t>();
      if (file.params.size() != d * d) throw InvalidArgument("mahalanobis blob does not match dim");
      std::vector<double> inv(file.params.begin(), file.params.end());
      return Matcher::mahalanobis(
          CovarianceModel(d, std::move(inv), m.at("ridge").get<double>(), m.at("fitted_on").get<std::size_t>()));
    }
    if (kind == "contrastive") {
      ContrastiveModel c;
      c.dim = m.at("dim").get<std::size_t>();
      c.embed_dim = m.at("embed_dim").get<std::size_t>();
      c.margin = m.at("margin").get<double>();
      c.seed = m.at("seed").get<std::uint64_t>();
      c.epochs = m.at("epochs").get<std::size_t>();
      c.final_val_loss = m.value("final_val_loss", 0.0);
      if (file.params.size() != 2 * c.dim * c.embed_dim)
        throw InvalidArgument("contrastive blob does not match dim x embed_dim");
      c.params = file.params;
      return Matcher::contrastive(std::move(c));
    }
    throw InvalidArgument("unknown matcher kind '" + kind + "'");
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("malformed model manifest: ") + ex.what());
  }
}

void Matcher::save(const std::filesystem::path& path) const { nn::write_model_file(to_file(), path); }

Matcher Matcher::load(const std::filesystem::path& path) { return from_file(nn::read_model_file(path)); }

Decision classify(double score, double threshold) {
  if (!std::isfinite(threshold)) throw InvalidArgument("threshold must be finite");
  return score < threshold ? Decision::similar : Decision::dissimilar;
}

}  // namespace cvir
