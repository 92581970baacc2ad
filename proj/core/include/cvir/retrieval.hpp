#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvir/feature_store.hpp"
#include "cvir/matchers.hpp"

namespace cvir {

/// str2sat: ground query against aerial database; sat2str: the reverse.
enum class Direction { str2sat, sat2str };

std::string_view to_string(Direction dir);
Direction parse_direction(std::string_view text);
constexpr View source_view(Direction dir) { return dir == Direction::str2sat ? View::ground : View::aerial; }
constexpr View target_view(Direction dir) { return opposite(source_view(dir)); }

struct Query {
  std::string record_id;
  Direction direction = Direction::str2sat;
  std::size_t k = 5;
};

struct RankedEntry {
  std::string id;
  double score = 0.0;
  std::string class_label;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Ascending score, ties by ascending id.
struct RankedList {
  std::string query_id;
  Direction direction = Direction::str2sat;
  std::string matcher;
  std::vector<RankedEntry> results;

  friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Sorts entries by (score, id).
void sort_ranked(std::vector<RankedEntry>& entries);

/// Scores every target-view record of `database` against the query record
/// (looked up in `database`). Throws InvalidArgument for an unknown id, a
/// query whose view does not match the direction, or an empty target view.
RankedList rank(const Query& query, const EmbeddingSet& database, const Matcher& matcher);

/// First min(k, size) entries. Throws InvalidArgument when k == 0.
RankedList top_k(const RankedList& ranked, std::size_t k);

/// {"query":id,"direction":..,"matcher":..,"results":[{"id","score","class"}]}
nlohmann::ordered_json to_json(const RankedList& ranked);

/// score(ground_i, aerial_j) for every ground/aerial record pair of a set,
/// computed once (in parallel, one slot per cell).
class ScoreMatrix {
 public:
  ScoreMatrix(const EmbeddingSet& set, const Matcher& matcher, std::size_t threads = 0);

  const std::vector<std::size_t>& ground() const { return ground_; }
  const std::vector<std::size_t>& aerial() const { return aerial_; }
  double at(std::size_t ground_row, std::size_t aerial_col) const { return scores_[ground_row * aerial_.size() + aerial_col]; }

  /// Ranked list for the record at set index `query_index` in a direction.
  RankedList ranked(std::size_t query_index, Direction dir) const;

 private:
  const EmbeddingSet* set_;
  std::string matcher_;
  std::vector<std::size_t> ground_, aerial_;
  std::vector<std::size_t> row_of_;  // set index -> row/column within its view
  std::vector<double> scores_;
};

}  // namespace cvir
