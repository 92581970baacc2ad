#pragma once

// Brute-force retrieval metrics written directly from their definitions.
// Inputs are relevance flags in ranked order plus each query's NG, so
// nothing here touches the engine's RankedList or GroundTruth types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace cvir::oracle {

struct Query {
  std::vector<bool> relevant_at;  // relevant_at[r-1]: is the item at rank r relevant
  std::size_t ng = 0;             // relevant items for this query (may exceed the flags shown)
};

inline double anmrr(const std::vector<Query>& queries) {
  std::size_t gtm = 0;
  for (const auto& q : queries) gtm = std::max(gtm, q.ng);
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& q : queries) {
    if (q.ng == 0) continue;
    const double ng = static_cast<double>(q.ng);
    const double k = std::min(4.0 * ng, 2.0 * static_cast<double>(gtm));
    double rank_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t r = 1; r <= q.relevant_at.size(); ++r) {
      if (!q.relevant_at[r - 1]) continue;
      ++seen;
      rank_sum += static_cast<double>(r) > k ? 1.25 * k : static_cast<double>(r);
    }
    rank_sum += static_cast<double>(q.ng - seen) * 1.25 * k;
    const double avr = rank_sum / ng;
    total += (avr - 0.5 - ng / 2.0) / (1.25 * k - 0.5 - ng / 2.0);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

inline double average_precision(const Query& q) {
  double s = 0.0;
  double hits = 0.0;
  for (std::size_t r = 1; r <= q.relevant_at.size(); ++r) {
    if (q.relevant_at[r - 1]) {
      hits += 1.0;
      s += hits / static_cast<double>(r);
    }
  }
  return s / static_cast<double>(q.ng);
}

inline double mean_ap(const std::vector<Query>& queries) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& q : queries) {
    if (q.ng == 0) continue;
    s += average_precision(q);
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

inline double hit_rate_at(const std::vector<Query>& queries, std::size_t k) {
  double hits = 0.0;
  std::size_t n = 0;
  for (const auto& q : queries) {
    if (q.ng == 0) continue;
    ++n;
    bool hit = false;
    for (std::size_t r = 0; r < q.relevant_at.size() && r < k; ++r) hit = hit || q.relevant_at[r];
    hits += hit ? 1.0 : 0.0;
  }
  return n ? hits / static_cast<double>(n) : 0.0;
}

struct Prf {
  double precision, recall, f1;
};

/// label 0 = similar = positive; predicted positive iff score < threshold.
inline Prf prf(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] < threshold;
    const bool pos = labels[i] == 0;
    tp += pred && pos;
    fp += pred && !pos;
    fn += !pred && pos;
  }
  Prf out{};
  out.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0 ? 2 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
  return out;
}

}  // namespace cvir::oracle
