#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cvir/deepcvir.hpp"
#include "cvir/error.hpp"
#include "cvir/evaluation.hpp"
#include "cvir/feature_store.hpp"
#include "cvir/matchers.hpp"
#include "cvir/parallel.hpp"
#include "cvir/retrieval.hpp"

namespace cvir::cli {

namespace {

using json = nlohmann::ordered_json;

struct GenOptions {
  std::size_t classes = 6, per_class = 100, dim = 1024;
  double sigma = 0.1;
  std::optional<std::uint64_t> seed;
  bool shared_mixing = false;
  std::string out;
};

struct DataOptions {
  std::string data;
  bool l2_normalize = false;
  double train_fraction = 0.8;
};

struct TrainOptions {
  DataOptions data;
  std::string matcher;
  std::string activation = "leaky_relu";
  std::optional<std::uint64_t> seed;
  std::string out;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 15;
  bool lr_decay = false;
  std::size_t samples_per_epoch = 2048;
  std::size_t validation_samples = 1024;
  double negatives = 1.0;
  std::optional<double> ridge;
  std::size_t embed_dim = 128;
  double margin = 1.0;
  std::size_t epochs = 20;
  std::size_t threads = 0;
};

struct QueryOptions {
  std::string model, matcher, data, id, direction = "str2sat";
  bool l2_normalize = false;
  std::size_t k = 5;
};

struct EvaluateOptions {
  DataOptions data;
  std::string matcher, model, direction = "both", out;
  std::optional<std::uint64_t> seed;
  std::optional<double> ridge;
  std::optional<double> threshold;
  std::size_t k = 5;
  std::size_t threads = 0;
};

struct ExportOptions {
  std::string data, out;
};

std::uint64_t require_seed(const std::optional<std::uint64_t>& seed) {
  if (!seed) throw InvalidArgument("--seed is required");
  return *seed;
}

EmbeddingSet load_data(const std::string& path, bool l2) {
  auto set = load_cvf(path);
  return l2 ? l2_normalized(set) : set;
}

json data_config(const DataOptions& d) {
  return {{"data", d.data}, {"l2_normalize", d.l2_normalize}, {"train_fraction", d.train_fraction}};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

// --- gen ---------------------------------------------------------------------

int cmd_gen(const GenOptions& o, std::ostream& out) {
  SyntheticConfig cfg;
  cfg.n_classes = o.classes;
  cfg.per_class = o.per_class;
  cfg.dim = o.dim;
  cfg.noise_sigma = o.sigma;
  cfg.seed = require_seed(o.seed);
  cfg.shared_mixing = o.shared_mixing;
  const auto set = generate_synthetic(cfg);
  write_cvf(set, o.out);
  const auto ground = set.indices_of(View::ground).size();
  out << "wrote " << set.size() << " records (" << ground << " ground, " << set.size() - ground << " aerial, "
      << set.class_names().size() << " classes, d=" << set.dim() << ") to " << o.out << "\n";
  return kExitOk;
}

// --- train -------------------------------------------------------------------

int cmd_train(const TrainOptions& o, std::ostream& out) {
  const auto seed = require_seed(o.seed);
  if (o.matcher.empty()) throw InvalidArgument("--matcher is required");
  const auto data = load_data(o.data.data, o.data.l2_normalize);
  const auto [train_set, val_set] = split(data, o.data.train_fraction, seed);

  json config = {{"command", "train"}, {"matcher", o.matcher}, {"seed", seed}};
  config.update(data_config(o.data));

  auto pairs = [&] {
    PairOptions po;
    po.negatives_per_positive = o.negatives;
    return std::pair{make_pairs(train_set, po, seed), make_pairs(val_set, po, seed + 1)};
  };

  nn::ModelFile file;
  if (o.matcher == "euclidean") {
    file = Matcher::euclidean().to_file();
  } else if (o.matcher == "mahalanobis") {
    auto cov = fit_covariance(train_set, o.ridge);
    config["ridge"] = o.ridge ? json(*o.ridge) : json(nullptr);
    out << "fitted covariance on " << cov.fitted_on() << " records, ridge=" << cov.ridge() << "\n";
    file = Matcher::mahalanobis(std::move(cov)).to_file();
  } else if (o.matcher == "contrastive") {
    const auto [train_pairs, val_pairs] = pairs();
    ContrastiveConfig cc;
    cc.embed_dim = o.embed_dim;
    cc.margin = o.margin;
    cc.learning_rate = o.lr;
    cc.epochs = o.epochs;
    cc.batch_size = o.batch;
    cc.samples_per_epoch = o.samples_per_epoch;
    cc.seed = seed;
    config.update(json{{"embed_dim", cc.embed_dim},
                       {"margin", cc.margin},
                       {"learning_rate", cc.learning_rate},
                       {"epochs", cc.epochs},
                       {"batch_size", cc.batch_size},
                       {"samples_per_epoch", cc.samples_per_epoch},
                       {"negatives_per_positive", o.negatives}});
    auto model = train_contrastive(train_pairs, val_pairs, data, cc, [&](const ContrastiveEpochLog& log) {
      out << "epoch=" << log.epoch << " train=" << log.train_loss << " val=" << log.val_loss << std::endl;
    });
    file = Matcher::contrastive(std::move(model)).to_file();
  } else {
    const DMLVariant variant{parse_dml_depth(o.matcher), nn::parse_activation(o.activation)};
    const auto [train_pairs, val_pairs] = pairs();
    TrainConfig tc;
    tc.learning_rate = o.lr;
    tc.batch_size = o.batch;
    tc.max_epochs = o.max_epochs;
    tc.early_stopping_patience = o.patience;
    if (o.lr_decay) tc.lr_decay = LrDecay{};
    tc.seed = seed;
    tc.samples_per_epoch = o.samples_per_epoch;
    tc.validation_samples = o.validation_samples;
    tc.threads = o.threads;
    config.update(json{{"activation", nn::to_string(variant.activation)},
                       {"learning_rate", tc.learning_rate},
                       {"batch_size", tc.batch_size},
                       {"max_epochs", tc.max_epochs},
                       {"early_stopping_patience", tc.early_stopping_patience},
                       {"lr_decay", o.lr_decay},
                       {"samples_per_epoch", tc.samples_per_epoch},
                       {"validation_samples", tc.validation_samples},
                       {"negatives_per_positive", o.negatives}});
    auto model = build_model(variant, data.dim(), {}, seed);
    model = train_dml(std::move(model), train_pairs, val_pairs, data, tc, [&](const EpochLog& log) {
      out << "epoch=" << log.epoch << " train=" << log.train_loss << " val=" << log.val_loss
          << " val_acc=" << log.val_accuracy << " lr=" << log.learning_rate << std::endl;
    });
    out << "best_epoch=" << model.meta.best_epoch << " best_val=" << model.meta.best_val_loss
        << " epochs=" << model.meta.epochs_run << "\n";
    file = model.to_file();
  }
  file.manifest["config"] = std::move(config);
  nn::write_model_file(file, o.out);
  out << "wrote " << o.matcher << " model to " << o.out << "\n";
  return kExitOk;
}

// --- query -------------------------------------------------------------------

Matcher resolve_matcher(const std::string& kind, const std::string& model_path) {
  if (!model_path.empty()) {
    auto m = Matcher::load(model_path);
    if (!kind.empty() && kind != m.name())
      throw InvalidArgument("--matcher " + kind + " does not match the model file's " + m.name());
    return m;
  }
  if (kind == "euclidean") return Matcher::euclidean();
  if (kind.empty()) throw InvalidArgument("give --model or --matcher euclidean");
  throw InvalidArgument("the " + kind + " matcher needs --model");
}

int cmd_query(const QueryOptions& o, std::ostream& out, std::ostream& err) {
  const auto matcher = resolve_matcher(o.matcher, o.model);
  const auto data = load_data(o.data, o.l2_normalize);
  Query q{o.id, parse_direction(o.direction), o.k};
  if (q.k == 0) throw InvalidArgument("--k must be >= 1");
  const auto ranked = rank(q, data, matcher);
  if (q.k > ranked.results.size()) {
    err << "warning: k=" << q.k << " exceeds the " << ranked.results.size()
        << "-record database; returning the full list\n";
  }
  out << to_json(top_k(ranked, q.k)).dump(2) << "\n";
  return kExitOk;
}

// --- evaluate ----------------------------------------------------------------

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
  const auto seed = require_seed(o.seed);
  const auto data = load_data(o.data.data, o.data.l2_normalize);
  const auto [train_set, val_set] = split(data, o.data.train_fraction, seed);

  std::optional<Matcher> matcher;
  if (o.model.empty() && o.matcher == "mahalanobis") {
    matcher = Matcher::mahalanobis(fit_covariance(train_set, o.ridge));
  } else {
    matcher = resolve_matcher(o.matcher, o.model);
  }

  EvalOptions eo;
  if (o.direction == "both") {
    eo.directions = {Direction::str2sat, Direction::sat2str};
  } else {
    eo.directions = {parse_direction(o.direction)};
  }
  eo.k = o.k;
  eo.threshold = o.threshold;
  eo.seed = seed;
  eo.threads = o.threads;
  const auto report = evaluate_suite(val_set, *matcher, eo);

  json config = {{"command", "evaluate"}, {"matcher", matcher->name()}, {"model", o.model}, {"seed", seed}};
  config.update(data_config(o.data));
  config.update(json{{"direction", o.direction},
                     {"k", o.k},
                     {"threshold", o.threshold ? json(*o.threshold) : json(nullptr)},
                     {"ridge", o.ridge ? json(*o.ridge) : json(nullptr)},
                     {"validation_records", val_set.size()}});
  json j = to_json(report);
  j["config"] = std::move(config);

  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw InvalidArgument("cannot open '" + o.out + "' for writing");
    f << j.dump(2) << "\n";
    if (!f) throw Error("failed writing '" + o.out + "'");
  } else {
    out << j.dump(2) << "\n";
  }
  out << render_table(report);
  return kExitOk;
}

// --- export ------------------------------------------------------------------

int cmd_export(const ExportOptions& o, std::ostream& out) {
  const auto data = load_cvf(o.data);
  std::ofstream f(o.out, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open '" + o.out + "' for writing");
  f << "id,view,class";
  for (std::size_t i = 0; i < data.dim(); ++i) f << ",v" << i;
  f << "\n";
  for (const auto& r : data.records()) {
    f << csv_field(r.id) << ',' << to_string(r.view) << ',' << csv_field(r.class_label);
    for (float v : r.vector) f << ',' << format_float(v);
    f << "\n";
  }
  if (!f) throw Error("failed writing '" + o.out + "'");
  out << "exported " << data.size() << " records to " << o.out << "\n";
  return kExitOk;
}

void add_data_options(CLI::App* sub, DataOptions& d) {
  sub->add_option("--data", d.data, "CVF embeddings file")->required()->check(CLI::ExistingFile);
  sub->add_flag("--l2-normalize", d.l2_normalize, "Scale every vector to unit length after loading");
  sub->add_option("--train-fraction", d.train_fraction, "Training share of the stratified split")
      ->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-view embedding retrieval: generate, train, query, evaluate, export", "cvir"};
  app.require_subcommand(1);
  app.fallthrough();
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Write a seeded synthetic cross-view CVF file");
  g->add_option("--classes", gen.classes)->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--per-class", gen.per_class)->capture_default_str();
  g->add_option("--dim", gen.dim)->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--sigma", gen.sigma)->capture_default_str();
  g->add_option("--seed", gen.seed)->required();
  g->add_flag("--shared-mixing", gen.shared_mixing, "Use one mixing map for both views");
  g->add_option("--out", gen.out)->required();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Fit or train a matcher and write a model file");
  add_data_options(t, tr.data);
  t->add_option("--matcher", tr.matcher, "euclidean|mahalanobis|contrastive|dml-s|dml-d|dml-t")->required();
  t->add_option("--activation", tr.activation, "relu|leaky-relu|elu (DML)")->capture_default_str();
  t->add_option("--seed", tr.seed)->required();
  t->add_option("--out", tr.out)->required();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--max-epochs", tr.max_epochs, "DML epoch cap")->capture_default_str();
  t->add_option("--patience", tr.patience, "DML early-stopping patience")->capture_default_str();
  t->add_flag("--lr-decay", tr.lr_decay, "Halve the learning rate after 5 epochs without improvement");
  t->add_option("--samples-per-epoch", tr.samples_per_epoch, "Training pairs per epoch (0 = all)")
      ->capture_default_str();
  t->add_option("--val-samples", tr.validation_samples, "Validation pairs scored per epoch (0 = all)")
      ->capture_default_str();
  t->add_option("--negatives", tr.negatives, "Negative pairs per positive")->capture_default_str();
  t->add_option("--ridge", tr.ridge, "Mahalanobis ridge (default 1e-3 * trace(C) / d)");
  t->add_option("--embed-dim", tr.embed_dim, "Contrastive embedding size")->capture_default_str();
  t->add_option("--margin", tr.margin, "Contrastive margin")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Contrastive epochs")->capture_default_str();

  QueryOptions qu;
  auto* q = app.add_subcommand("query", "Rank the opposite view against one record");
  q->add_option("--model", qu.model)->check(CLI::ExistingFile);
  q->add_option("--matcher", qu.matcher);
  q->add_option("--data", qu.data)->required()->check(CLI::ExistingFile);
  q->add_flag("--l2-normalize", qu.l2_normalize);
  q->add_option("--id", qu.id)->required();
  q->add_option("--direction", qu.direction, "str2sat|sat2str")->capture_default_str();
  q->add_option("--k", qu.k)->capture_default_str();

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Score a matcher on the validation split");
  add_data_options(e, ev.data);
  e->add_option("--matcher", ev.matcher);
  e->add_option("--model", ev.model)->check(CLI::ExistingFile);
  e->add_option("--seed", ev.seed)->required();
  e->add_option("--direction", ev.direction, "str2sat|sat2str|both")->capture_default_str();
  e->add_option("--k", ev.k)->capture_default_str();
  e->add_option("--threshold", ev.threshold, "Similarity threshold for precision/recall/F1");
  e->add_option("--ridge", ev.ridge, "Ridge when fitting mahalanobis without --model");
  e->add_option("--out", ev.out, "Write the JSON report here instead of stdout");

  ExportOptions ex;
  auto* x = app.add_subcommand("export", "Write embeddings as CSV");
  x->add_option("--data", ex.data)->required()->check(CLI::ExistingFile);
  x->add_option("--out", ex.out)->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  }

  tr.threads = threads;
  ev.threads = threads;
  struct ThreadScope {
    std::size_t saved = default_thread_count();
    ~ThreadScope() { set_default_thread_count(saved); }
  } scope;
  if (threads != 0) set_default_thread_count(threads);

  try {
    if (*g) return cmd_gen(gen, out);
    if (*t) return cmd_train(tr, out);
    if (*q) return cmd_query(qu, out, err);
    if (*e) return cmd_evaluate(ev, out);
    if (*x) return cmd_export(ex, out);
  } catch (const InvalidArgument& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace cvir::cli
