#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvir/feature_store.hpp"
#include "cvir/matchers.hpp"
#include "cvir/retrieval.hpp"

namespace cvir {

/// query id -> ids of the relevant target records.
using GroundTruth = std::unordered_map<std::string, std::unordered_set<std::string>>;

/// Relevant = same class, opposite view, for every source-view record of `set`.
GroundTruth build_ground_truth(const EmbeddingSet& set, Direction dir);

/// 1-based ranks of the relevant entries of one list.
std::vector<std::size_t> relevant_ranks(const RankedList& ranked, const std::unordered_set<std::string>& relevant);

/// Normalized modified retrieval rank of one query with NG relevant items at
/// `ranks` and cutoff K.
double nmrr(std::span<const std::size_t> ranks, std::size_t ng, std::size_t k);

/// Aggregate over queries; queries with an empty relevant set are skipped
/// and counted in `excluded`.
struct MetricValue {
  double value = 0.0;
  std::size_t queries = 0;
  std::size_t excluded = 0;
};

/// MPEG-7 ANMRR with K(q) = min(4 NG(q), 2 GTM), GTM = max NG.
MetricValue anmrr(std::span<const RankedList> lists, const GroundTruth& truth);
double average_precision(const RankedList& ranked, const std::unordered_set<std::string>& relevant);
MetricValue mean_ap(std::span<const RankedList> lists, const GroundTruth& truth);
/// Fraction of queries with a relevant item in the first k (hit rate).
MetricValue p_at_k(std::span<const RankedList> lists, const GroundTruth& truth, std::size_t k);
/// Conventional mean of |relevant in top k| / k.
MetricValue precision_at_k(std::span<const RankedList> lists, const GroundTruth& truth, std::size_t k);

struct ScoredPair {
  double score = 0.0;
  int label = 0;  // 0 = similar
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Positive class = similar; predicted similar iff score < threshold.
Prf prf_at_threshold(std::span<const ScoredPair> pairs, double threshold);

struct DirectionReport {
  Direction direction = Direction::str2sat;
  MetricValue anmrr, map, p_at_k, precision_at_k;
};

struct PairReport {
  double threshold = 0.0;
  std::size_t pairs = 0;
  Prf prf;
};

struct MetricsReport {
  std::string matcher;
  std::size_t k = 5;
  std::vector<DirectionReport> directions;
  /// Mean of the directional ANMRRs.
  double average_anmrr = 0.0;
  /// Absent for distance matchers run without an explicit threshold.
  std::optional<PairReport> classification;
};

struct EvalOptions {
  std::vector<Direction> directions{Direction::str2sat, Direction::sat2str};
  std::size_t k = 5;
  /// Overrides the matcher's default threshold.
  std::optional<double> threshold;
  /// Seed for the balanced pairs scored for precision/recall/F1.
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

/// Every record of `set` is a query in each requested direction against the
/// opposite-view records of the same set. Precision/recall/F1 are taken over
/// balanced make_pairs(set) pairs.
MetricsReport evaluate_suite(const EmbeddingSet& set, const Matcher& matcher, const EvalOptions& options);

nlohmann::ordered_json to_json(const MetricsReport& report);
/// Aligned plain-text table, one row per direction plus the average.
std::string render_table(const MetricsReport& report);

}  // namespace cvir
