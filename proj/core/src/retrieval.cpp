#include "cvir/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "cvir/error.hpp"
#include "cvir/parallel.hpp"

namespace cvir {

std::string_view to_string(Direction dir) { return dir == Direction::str2sat ? "str2sat" : "sat2str"; }

Direction parse_direction(std::string_view text) {
  if (text == "str2sat") return Direction::str2sat;
  if (text == "sat2str") return Direction::sat2str;
  throw InvalidArgument("unknown direction '" + std::string(text) + "' (expected str2sat|sat2str)");
}

void sort_ranked(std::vector<RankedEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.id < b.id;
  });
}

namespace {

double encoded_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

/// Linear matchers are scored as distances between per-record encodings, so
/// each vector is mapped once instead of once per pair.
std::vector<std::vector<double>> encode_all(const Matcher& matcher, const EmbeddingSet& set,
                                            const std::vector<std::size_t>& indices, std::size_t threads) {
  std::vector<std::vector<double>> out(indices.size());
  parallel_for(
      indices.size(),
      [&](std::size_t i) {
        const auto& rec = set[indices[i]];
        out[i] = matcher.encode(rec.view, rec.vector);
      },
      threads);
  return out;
}

void check_dim(const Matcher& matcher, const EmbeddingSet& set) {
  if (matcher.dim() != 0 && set.dim() != matcher.dim()) {
    throw ShapeError("the " + matcher.name() + " matcher expects d=" + std::to_string(matcher.dim()) +
                     " but the embeddings have d=" + std::to_string(set.dim()));
  }
}

}  // namespace

RankedList rank(const Query& query, const EmbeddingSet& database, const Matcher& matcher) {
  check_dim(matcher, database);
  const auto* q = database.find(query.record_id);
  if (q == nullptr) throw InvalidArgument("unknown record id '" + query.record_id + "'");
  if (q->view != source_view(query.direction)) {
    throw InvalidArgument("direction " + std::string(to_string(query.direction)) + " needs a query from the " +
                          std::string(to_string(source_view(query.direction))) + " view, but '" +
                          query.record_id + "' is " + std::string(to_string(q->view)));
  }
  const auto targets = database.indices_of(target_view(query.direction));
  if (targets.empty()) {
    throw InvalidArgument("database has no " + std::string(to_string(target_view(query.direction))) + "-view records");
  }

  std::vector<RankedEntry> entries(targets.size());
  const bool ground_query = q->view == View::ground;
  if (matcher.has_encoding()) {
    const auto qe = matcher.encode(q->view, q->vector);
    const auto te = encode_all(matcher, database, targets, 0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = database[targets[i]];
      entries[i] = {t.id, encoded_distance(qe, te[i]), t.class_label};
    }
  } else {
    parallel_for(targets.size(), [&](std::size_t i) {
      const auto& t = database[targets[i]];
      const double s = ground_query ? matcher.score(q->vector, t.vector) : matcher.score(t.vector, q->vector);
      entries[i] = {t.id, s, t.class_label};
    });
  }
  sort_ranked(entries);
  return {query.record_id, query.direction, matcher.name(), std::move(entries)};
}

RankedList top_k(const RankedList& ranked, std::size_t k) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  RankedList out{ranked.query_id, ranked.direction, ranked.matcher, {}};
  const auto n = std::min(k, ranked.results.size());
  out.results.assign(ranked.results.begin(), ranked.results.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

nlohmann::ordered_json to_json(const RankedList& ranked) {
  nlohmann::ordered_json j;
  j["query"] = ranked.query_id;
  j["direction"] = to_string(ranked.direction);
  j["matcher"] = ranked.matcher;
  auto results = nlohmann::ordered_json::array();
  for (const auto& e : ranked.results) results.push_back({{"id", e.id}, {"score", e.score}, {"class", e.class_label}});
  j["results"] = std::move(results);
  return j;
}

ScoreMatrix::ScoreMatrix(const EmbeddingSet& set, const Matcher& matcher, std::size_t threads)
    : set_(&set), matcher_(matcher.name()) {
  check_dim(matcher, set);
  ground_ = set.indices_of(View::ground);
  aerial_ = set.indices_of(View::aerial);
  row_of_.assign(set.size(), 0);
  for (std::size_t i = 0; i < ground_.size(); ++i) row_of_[ground_[i]] = i;
  for (std::size_t i = 0; i < aerial_.size(); ++i) row_of_[aerial_[i]] = i;

  const std::size_t ng = ground_.size(), na = aerial_.size();
  scores_.assign(ng * na, 0.0);
  if (matcher.has_encoding()) {
    const auto ge = encode_all(matcher, set, ground_, threads);
    const auto ae = encode_all(matcher, set, aerial_, threads);
    parallel_for(
        ng * na, [&](std::size_t c) { scores_[c] = encoded_distance(ge[c / na], ae[c % na]); }, threads);
  } else {
    parallel_for(
        ng * na,
        [&](std::size_t c) { scores_[c] = matcher.score(set[ground_[c / na]].vector, set[aerial_[c % na]].vector); },
        threads);
  }
}

RankedList ScoreMatrix::ranked(std::size_t query_index, Direction dir) const {
  const auto& q = (*set_)[query_index];
  if (q.view != source_view(dir)) {
    throw InvalidArgument("direction " + std::string(to_string(dir)) + " needs a query from the " +
                          std::string(to_string(source_view(dir))) + "-view query");
  }
  const auto& targets = dir == Direction::str2sat ? aerial_ : ground_;
  if (targets.empty()) throw InvalidArgument("no target-view records to rank");
  const std::size_t row = row_of_[query_index];
  std::vector<RankedEntry> entries(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = (*set_)[targets[i]];
    const double s = dir == Direction::str2sat ? at(row, i) : at(i, row);
    entries[i] = {t.id, s, t.class_label};
  }
  sort_ranked(entries);
  return {q.id, dir, matcher_, std::move(entries)};
}

}  // namespace cvir
