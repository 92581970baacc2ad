#include "cvir/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "cvir/error.hpp"
#include "cvir/parallel.hpp"

namespace cvir {

GroundTruth build_ground_truth(const EmbeddingSet& set, Direction dir) {
  GroundTruth truth;
  const auto targets = set.indices_of(target_view(dir));
  for (auto qi : set.indices_of(source_view(dir))) {
    auto& rel = truth[set[qi].id];
    for (auto ti : targets)
      if (set[ti].class_label == set[qi].class_label) rel.insert(set[ti].id);
  }
  return truth;
}

std::vector<std::size_t> relevant_ranks(const RankedList& ranked, const std::unordered_set<std::string>& relevant) {
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < ranked.results.size(); ++i)
    if (relevant.contains(ranked.results[i].id)) ranks.push_back(i + 1);
  return ranks;
}

double nmrr(std::span<const std::size_t> ranks, std::size_t ng, std::size_t k) {
  if (ng == 0) throw InvalidArgument("nmrr needs NG >= 1");
  const double kk = static_cast<double>(k), g = static_cast<double>(ng);
  double sum = 0.0;
  std::size_t found = 0;
  for (auto r : ranks) {
    sum += r <= k ? static_cast<double>(r) : 1.25 * kk;
    ++found;
  }
  // relevant items missing from the list count as beyond K
  sum += static_cast<double>(ng - std::min(found, ng)) * 1.25 * kk;
  const double avr = sum / g;
  const double mrr = avr - 0.5 - g / 2.0;
  return mrr / (1.25 * kk - 0.5 - g / 2.0);
}

namespace {

const std::unordered_set<std::string>* relevant_for(const RankedList& list, const GroundTruth& truth) {
  const auto it = truth.find(list.query_id);
  if (it == truth.end() || it->second.empty()) return nullptr;
  return &it->second;
}

template <class F>
MetricValue mean_over(std::span<const RankedList> lists, const GroundTruth& truth, F&& per_query) {
  MetricValue out;
  double sum = 0.0;
  for (const auto& list : lists) {
    const auto* rel = relevant_for(list, truth);
    if (rel == nullptr) {
      ++out.excluded;
      continue;
    }
    sum += per_query(list, *rel);
    ++out.queries;
  }
  out.value = out.queries == 0 ? 0.0 : sum / static_cast<double>(out.queries);
  return out;
}

}  // namespace

MetricValue anmrr(std::span<const RankedList> lists, const GroundTruth& truth) {
  std::size_t gtm = 0;
  for (const auto& list : lists)
    if (const auto* rel = relevant_for(list, truth)) gtm = std::max(gtm, rel->size());
  return mean_over(lists, truth, [&](const RankedList& list, const std::unordered_set<std::string>& rel) {
    const std::size_t ng = rel.size();
    const std::size_t k = std::min(4 * ng, 2 * gtm);
    const auto ranks = relevant_ranks(list, rel);
    return nmrr(ranks, ng, k);
  });
}

double average_precision(const RankedList& ranked, const std::unordered_set<std::string>& relevant) {
  if (relevant.empty()) throw InvalidArgument("average precision needs a non-empty relevant set");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.results.size(); ++i) {
    if (!relevant.contains(ranked.results[i].id)) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(relevant.size());
}

MetricValue mean_ap(std::span<const RankedList> lists, const GroundTruth& truth) {
  return mean_over(lists, truth, [](const RankedList& list, const std::unordered_set<std::string>& rel) {
    return average_precision(list, rel);
  });
}

MetricValue p_at_k(std::span<const RankedList> lists, const GroundTruth& truth, std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  return mean_over(lists, truth, [k](const RankedList& list, const std::unordered_set<std::string>& rel) {
    const auto n = std::min(k, list.results.size());
    for (std::size_t i = 0; i < n; ++i)
      if (rel.contains(list.results[i].id)) return 1.0;
    return 0.0;
  });
}

MetricValue precision_at_k(std::span<const RankedList> lists, const GroundTruth& truth, std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  return mean_over(lists, truth, [k](const RankedList& list, const std::unordered_set<std::string>& rel) {
    const auto n = std::min(k, list.results.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += rel.contains(list.results[i].id);
    return static_cast<double>(hits) / static_cast<double>(k);
  });
}

Prf prf_at_threshold(std::span<const ScoredPair> pairs, double threshold) {
  Prf out;
  for (const auto& p : pairs) {
    const bool predicted = classify(p.score, threshold) == Decision::similar;
    const bool actual = p.label == 0;
    if (predicted && actual) ++out.tp;
    else if (predicted) ++out.fp;
    else if (actual) ++out.fn;
    else ++out.tn;
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  out.precision = ratio(out.tp, out.tp + out.fp);
  out.recall = ratio(out.tp, out.tp + out.fn);
  const double pr = out.precision + out.recall;
  out.f1 = pr == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / pr;
  return out;
}

MetricsReport evaluate_suite(const EmbeddingSet& set, const Matcher& matcher, const EvalOptions& options) {
  if (options.directions.empty()) throw InvalidArgument("no evaluation direction requested");
  if (options.k == 0) throw InvalidArgument("k must be >= 1");

  const ScoreMatrix matrix(set, matcher, options.threads);
  MetricsReport report;
  report.matcher = matcher.name();
  report.k = options.k;

  double anmrr_sum = 0.0;
  for (auto dir : options.directions) {
    const auto queries = set.indices_of(source_view(dir));
    std::vector<RankedList> lists(queries.size());
    parallel_for(
        queries.size(), [&](std::size_t i) { lists[i] = matrix.ranked(queries[i], dir); }, options.threads);
    const auto truth = build_ground_truth(set, dir);
    DirectionReport dr;
    dr.direction = dir;
    dr.anmrr = anmrr(lists, truth);
    dr.map = mean_ap(lists, truth);
    dr.p_at_k = p_at_k(lists, truth, options.k);
    dr.precision_at_k = precision_at_k(lists, truth, options.k);
    anmrr_sum += dr.anmrr.value;
    report.directions.push_back(dr);
  }
  report.average_anmrr = anmrr_sum / static_cast<double>(report.directions.size());

  const auto threshold = options.threshold ? options.threshold : matcher.default_threshold();
  if (threshold) {
    const auto pairs = make_pairs(set, PairOptions{}, options.seed);
    std::vector<std::size_t> row(set.size()), col(set.size());
    for (std::size_t i = 0; i < matrix.ground().size(); ++i) row[matrix.ground()[i]] = i;
    for (std::size_t i = 0; i < matrix.aerial().size(); ++i) col[matrix.aerial()[i]] = i;
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < set.size(); ++i) index.emplace(set[i].id, i);
    std::vector<ScoredPair> scored;
    scored.reserve(pairs.size());
    for (const auto& p : pairs) {
      scored.push_back({matrix.at(row[index.at(p.ground_id)], col[index.at(p.aerial_id)]), p.label});
    }
    report.classification = PairReport{*threshold, scored.size(), prf_at_threshold(scored, *threshold)};
  }
  return report;
}

namespace {

nlohmann::ordered_json metric_json(const MetricValue& m) { return m.value; }

}  // namespace

nlohmann::ordered_json to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["matcher"] = report.matcher;
  auto dirs = nlohmann::ordered_json::object();
  for (const auto& d : report.directions) {
    nlohmann::ordered_json b;
    b["queries"] = d.anmrr.queries;
    b["excluded_queries"] = d.anmrr.excluded;
    b["anmrr"] = metric_json(d.anmrr);
    b["map"] = metric_json(d.map);
    b["p_at_k"] = {{"k", report.k}, {"value", d.p_at_k.value}};
    b["precision_at_k"] = {{"k", report.k}, {"value", d.precision_at_k.value}};
    dirs[std::string(to_string(d.direction))] = std::move(b);
  }
  j["directions"] = std::move(dirs);
  j["average_anmrr"] = report.average_anmrr;
  if (report.classification) {
    const auto& c = *report.classification;
    j["classification"] = {{"threshold", c.threshold}, {"pairs", c.pairs},          {"precision", c.prf.precision},
                           {"recall", c.prf.recall},   {"f1", c.prf.f1},            {"tp", c.prf.tp},
                           {"fp", c.prf.fp},           {"fn", c.prf.fn},            {"tn", c.prf.tn}};
  } else {
    j["classification"] = nullptr;
  }
  return j;
}

std::string render_table(const MetricsReport& report) {
  std::ostringstream out;
  char line[256];
  const std::string pk = "P@" + std::to_string(report.k);
  std::snprintf(line, sizeof line, "%-12s %-9s %8s %8s %8s %10s %8s %8s\n", "Matcher", "Task", "ANMRR", "mAP",
                pk.c_str(), "Precision", "Recall", "F1");
  out << line;
  const auto prf = [&](double v) {
    char buf[32];
    if (report.classification) std::snprintf(buf, sizeof buf, "%.4f", v);
    else std::snprintf(buf, sizeof buf, "-");
    return std::string(buf);
  };
  for (const auto& d : report.directions) {
    const auto& c = report.classification;
    std::snprintf(line, sizeof line, "%-12s %-9s %8.4f %8.4f %8.4f %10s %8s %8s\n", report.matcher.c_str(),
                  std::string(to_string(d.direction)).c_str(), d.anmrr.value, d.map.value, d.p_at_k.value,
                  prf(c ? c->prf.precision : 0).c_str(), prf(c ? c->prf.recall : 0).c_str(),
                  prf(c ? c->prf.f1 : 0).c_str());
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %-9s %8.4f\n", report.matcher.c_str(), "average", report.average_anmrr);
  out << line;
  if (report.classification) {
    std::snprintf(line, sizeof line, "threshold %.6g over %zu balanced pairs\n", report.classification->threshold,
                  report.classification->pairs);
    out << line;
  } else {
    out << "precision/recall/F1 not reported: distance matcher without --threshold\n";
  }
  return out.str();
}

}  // namespace cvir
