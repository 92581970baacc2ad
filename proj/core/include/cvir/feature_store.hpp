#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cvir {

enum class View : std::uint8_t { ground, aerial };

std::string_view to_string(View view);
/// Parses "ground" / "aerial"; throws InvalidArgument otherwise.
View parse_view(std::string_view text);
constexpr View opposite(View view) { return view == View::ground ? View::aerial : View::ground; }

struct EmbeddingRecord {
  std::string id;
  View view = View::ground;
  std::string class_label;
  std::vector<float> vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

/// A collection of embeddings from both views sharing one dimensionality.
///
/// Records keep insertion order. `add` enforces the record invariants (common
/// dimension, finite values, unique id), so a set that exists is valid.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  explicit EmbeddingSet(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Class names in order of first appearance.
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

  void add(EmbeddingRecord record);

  const EmbeddingRecord* find(std::string_view id) const;
  const EmbeddingRecord& at(std::string_view id) const;

  /// Indices of records with the given view, in record order.
  std::vector<std::size_t> indices_of(View view) const;

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    return a.dim_ == b.dim_ && a.records_ == b.records_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::vector<std::string> class_names_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// --- CVF interchange format ------------------------------------------------

void write_cvf(const EmbeddingSet& set, std::ostream& out);
void write_cvf(const EmbeddingSet& set, const std::filesystem::path& path);
/// Throws ParseError (with line number) on malformed input.
EmbeddingSet read_cvf(std::istream& in);
EmbeddingSet load_cvf(const std::filesystem::path& path);

/// Shortest decimal string that round-trips to the same 32-bit float.
std::string format_float(float value);

// --- splitting and pairing --------------------------------------------------

/// Stratified split by (class, view). Each cell of n records contributes
/// round(n * train_fraction) records to the first set, clamped to [1, n-1].
std::pair<EmbeddingSet, EmbeddingSet> split(const EmbeddingSet& set, double train_fraction,
                                            std::uint64_t seed);

/// Label 0 means same class (similar), 1 means different class.
struct PairSample {
  std::string ground_id;
  std::string aerial_id;
  int label = 0;

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct PairOptions {
  double negatives_per_positive = 1.0;
  /// Uniformly subsample positives down to this many; 0 keeps all of them.
  std::size_t max_positives = 0;
};

/// Emits same-class cross-view positives and uniformly drawn different-class
/// cross-view negatives, shuffled with `seed`.
std::vector<PairSample> make_pairs(const EmbeddingSet& set, const PairOptions& options,
                                   std::uint64_t seed);

// --- synthetic data -----------------------------------------------------------

struct SyntheticConfig {
  std::size_t n_classes = 6;
  std::size_t per_class = 100;
  std::size_t dim = 1024;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
  /// Use one mixing map for both views (degenerate, view-identical data).
  bool shared_mixing = false;
};

/// Class prototypes p_c ~ N(0, I) seen through two per-view random linear
/// maps with N(0, 1/d) entries, plus isotropic Gaussian noise.
EmbeddingSet generate_synthetic(const SyntheticConfig& cfg);

/// Returns a copy with every vector scaled to unit L2 norm (zero vectors kept).
EmbeddingSet l2_normalized(const EmbeddingSet& set);

/// Keeps the records of one view, in order.
EmbeddingSet filter_view(const EmbeddingSet& set, View view);

}  // namespace cvir
