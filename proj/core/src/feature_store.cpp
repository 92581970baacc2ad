#include "cvir/feature_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cvir/error.hpp"

namespace cvir {

std::string_view to_string(View view) { return view == View::ground ? "ground" : "aerial"; }

View parse_view(std::string_view text) {
  if (text == "ground") return View::ground;
  if (text == "aerial") return View::aerial;
  throw InvalidArgument("unknown view '" + std::string(text) + "' (expected ground|aerial)");
}

// --- EmbeddingSet -------------------------------------------------------------

EmbeddingSet::EmbeddingSet(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
}

void EmbeddingSet::add(EmbeddingRecord record) {
  if (dim_ == 0) throw InvalidArgument("embedding set has no dimension");
  if (record.id.empty()) throw InvalidArgument("record id must not be empty");
  if (record.vector.size() != dim_) {
    throw ShapeError("record '" + record.id + "' has " + std::to_string(record.vector.size()) +
                     " values, expected " + std::to_string(dim_));
  }
  for (float x : record.vector) {
    if (!std::isfinite(x)) throw InvalidArgument("record '" + record.id + "' contains NaN/Inf");
  }
  if (by_id_.contains(record.id)) throw InvalidArgument("duplicate record id '" + record.id + "'");
  if (std::find(class_names_.begin(), class_names_.end(), record.class_label) == class_names_.end())
    class_names_.push_back(record.class_label);
  by_id_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

const EmbeddingRecord* EmbeddingSet::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

const EmbeddingRecord& EmbeddingSet::at(std::string_view id) const {
  const auto* rec = find(id);
  if (rec == nullptr) throw InvalidArgument("unknown record id '" + std::string(id) + "'");
  return *rec;
}

std::vector<std::size_t> EmbeddingSet::indices_of(View view) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (records_[i].view == view) out.push_back(i);
  return out;
}

// --- CVF ------------------------------------------------------------------------

std::string format_float(float value) {
  // "-0" would lex as an integer and lose its sign
  if (value == 0.f && std::signbit(value)) return "-0.0";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_cvf(const EmbeddingSet& set, std::ostream& out) {
  nlohmann::ordered_json header;
  header["format"] = "CVF";
  header["version"] = 1;
  header["dim"] = set.dim();
  header["count"] = set.size();
  out << header.dump() << '\n';

  std::string line;
  for (const auto& rec : set.records()) {
    line.clear();
    line += "{\"id\":";
    line += nlohmann::json(rec.id).dump();
    line += ",\"view\":\"";
    line += to_string(rec.view);
    line += "\",\"class\":";
    line += nlohmann::json(rec.class_label).dump();
    line += ",\"vec\":[";
    for (std::size_t i = 0; i < rec.vector.size(); ++i) {
      if (i) line += ',';
      line += format_float(rec.vector[i]);
    }
    line += "]}\n";
    out << line;
  }
  if (!out) throw Error("failed writing CVF stream");
}

void write_cvf(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_cvf(set, out);
}

namespace {

// SAX handler for one record line. Keeps the raw text of every number in
// "vec" so it can be parsed straight to float without a double detour.
class RecordHandler : public nlohmann::json_sax<nlohmann::json> {
 public:
  explicit RecordHandler(EmbeddingRecord& rec) : rec_(rec) {}

  bool null() override { return scalar("null"); }
  bool boolean(bool) override { return scalar("boolean"); }
  bool number_integer(number_integer_t v) override { return number(static_cast<float>(v), {}); }
  bool number_unsigned(number_unsigned_t v) override { return number(static_cast<float>(v), {}); }
  bool number_float(number_float_t, const string_t& raw) override { return number(0.f, raw); }
  bool binary(binary_t&) override { return fail("unexpected binary value"); }

  bool string(string_t& val) override {
    if (depth_ != 1) return fail("unexpected string inside array");
    if (key_ == "id") {
      rec_.id = val;
      seen_id_ = true;
    } else if (key_ == "view") {
      if (val != "ground" && val != "aerial") return fail("view must be \"ground\" or \"aerial\"");
      rec_.view = parse_view(val);
      seen_view_ = true;
    } else if (key_ == "class") {
      rec_.class_label = val;
      seen_class_ = true;
    }
    return true;
  }

  bool start_object(std::size_t) override {
    if (depth_ != 0) return fail("nested objects are not allowed in a record");
    ++depth_;
    return true;
  }
  bool end_object() override {
    --depth_;
    return true;
  }
  bool key(string_t& val) override {
    key_ = val;
    return true;
  }
  bool start_array(std::size_t) override {
    if (depth_ != 1 || key_ != "vec") return fail("unexpected array for key '" + key_ + "'");
    ++depth_;
    seen_vec_ = true;
    return true;
  }
  bool end_array() override {
    --depth_;
    return true;
  }
  bool parse_error(std::size_t pos, const std::string&, const nlohmann::detail::exception& ex) override {
    error_ = "malformed JSON at offset " + std::to_string(pos) + ": " + ex.what();
    return false;
  }

  const std::string& error() const { return error_; }

  std::string missing_field() const {
    if (!seen_id_) return "id";
    if (!seen_view_) return "view";
    if (!seen_class_) return "class";
    if (!seen_vec_) return "vec";
    return {};
  }

 private:
  bool scalar(const char* what) {
    if (depth_ == 2) return fail(std::string("vec contains a ") + what);
    return true;  // unknown scalar keys are ignored
  }

  bool number(float v, const std::string& raw) {
    if (depth_ != 2) return true;
    if (!raw.empty()) {
      auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (res.ec != std::errc{} || res.ptr != raw.data() + raw.size() || !std::isfinite(v))
        return fail("value '" + raw + "' is not a finite 32-bit float");
    }
    rec_.vector.push_back(v);
    return true;
  }

  bool fail(std::string msg) {
    error_ = std::move(msg);
    return false;
  }

  EmbeddingRecord& rec_;
  int depth_ = 0;
  std::string key_;
  std::string error_;
  bool seen_id_ = false, seen_view_ = false, seen_class_ = false, seen_vec_ = false;
};

}  // namespace

EmbeddingSet read_cvf(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing CVF header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(1, std::string("malformed CVF header: ") + ex.what());
  }
  if (!header.is_object()) throw ParseError(1, "CVF header must be a JSON object");
  if (header.value("format", std::string{}) != "CVF") throw ParseError(1, "header format is not \"CVF\"");
  if (!header.contains("version") || header["version"] != 1)
    throw ParseError(1, "unsupported CVF version");
  if (!header.contains("dim") || !header["dim"].is_number_unsigned() || header["dim"].get<std::size_t>() == 0)
    throw ParseError(1, "header dim must be a positive integer");
  if (!header.contains("count") || !header["count"].is_number_unsigned())
    throw ParseError(1, "header count must be a non-negative integer");

  const auto dim = header["dim"].get<std::size_t>();
  const auto count = header["count"].get<std::size_t>();
  EmbeddingSet set(dim);

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    EmbeddingRecord rec;
    rec.vector.reserve(dim);
    RecordHandler handler(rec);
    bool ok = nlohmann::json::sax_parse(line, &handler);
    if (!ok) throw ParseError(lineno, handler.error());
    if (auto missing = handler.missing_field(); !missing.empty())
      throw ParseError(lineno, "record is missing field '" + missing + "'");
    if (rec.vector.size() != dim) {
      throw ParseError(lineno, "record '" + rec.id + "' has " + std::to_string(rec.vector.size()) +
                                   " values but header dim is " + std::to_string(dim));
    }
    if (set.find(rec.id) != nullptr) throw ParseError(lineno, "duplicate record id '" + rec.id + "'");
    try {
      set.add(std::move(rec));
    } catch (const InvalidArgument& ex) {
      throw ParseError(lineno, ex.what());
    }
  }
  if (set.size() != count) {
    throw ParseError(lineno, "header count is " + std::to_string(count) + " but file holds " +
                                 std::to_string(set.size()) + " records");
  }
  return set;
}

EmbeddingSet load_cvf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
  return read_cvf(in);
}

// --- split / pairs -----------------------------------------------------------------

namespace {

EmbeddingSet subset(const EmbeddingSet& set, const std::vector<bool>& keep) {
  EmbeddingSet out(set.dim());
  for (std::size_t i = 0; i < set.size(); ++i)
    if (keep[i]) out.add(set[i]);
  return out;
}

}  // namespace

std::pair<EmbeddingSet, EmbeddingSet> split(const EmbeddingSet& set, double train_fraction,
                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidArgument("train fraction must lie strictly between 0 and 1");

  // Cells keyed by (class index, view) in order of first appearance.
  std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> cells;
  const auto& names = set.class_names();
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto cls = static_cast<std::size_t>(
        std::find(names.begin(), names.end(), set[i].class_label) - names.begin());
    cells[{cls, static_cast<int>(set[i].view)}].push_back(i);
  }

  std::mt19937_64 rng(seed);
  std::vector<bool> in_train(set.size(), false);
  for (auto& [key, members] : cells) {
    const std::size_t n = members.size();
    if (n < 2) {
      throw InvalidArgument("cannot stratify: class '" + names[key.first] + "' has " +
                            std::to_string(n) + " " +
                            std::string(to_string(static_cast<View>(key.second))) + " record(s)");
    }
    auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < n_train; ++j) in_train[members[j]] = true;
  }

  std::vector<bool> in_val(in_train.size());
  std::transform(in_train.begin(), in_train.end(), in_val.begin(), [](bool b) { return !b; });
  return {subset(set, in_train), subset(set, in_val)};
}

std::vector<PairSample> make_pairs(const EmbeddingSet& set, const PairOptions& options,
                                   std::uint64_t seed) {
  if (!(options.negatives_per_positive >= 0.0))
    throw InvalidArgument("negatives_per_positive must be non-negative");
  const auto ground = set.indices_of(View::ground);
  const auto aerial = set.indices_of(View::aerial);
  if (ground.empty() || aerial.empty()) throw InvalidArgument("pairing needs records from both views");

  using IndexPair = std::pair<std::uint32_t, std::uint32_t>;
  std::vector<IndexPair> positives, negatives;
  for (auto g : ground) {
    for (auto a : aerial) {
      auto& bucket = set[g].class_label == set[a].class_label ? positives : negatives;
      bucket.emplace_back(static_cast<std::uint32_t>(g), static_cast<std::uint32_t>(a));
    }
  }
  if (positives.empty()) throw InvalidArgument("no same-class cross-view pair exists");

  std::mt19937_64 rng(seed);
  if (options.max_positives > 0 && positives.size() > options.max_positives) {
    std::shuffle(positives.begin(), positives.end(), rng);
    positives.resize(options.max_positives);
  }
  auto n_neg = static_cast<std::size_t>(
      std::llround(static_cast<double>(positives.size()) * options.negatives_per_positive));
  if (n_neg > 0 && negatives.empty())
    throw InvalidArgument("no different-class cross-view pair exists (single class?)");
  if (n_neg < negatives.size()) {
    std::shuffle(negatives.begin(), negatives.end(), rng);
    negatives.resize(n_neg);
  }

  std::vector<PairSample> pairs;
  pairs.reserve(positives.size() + negatives.size());
  for (auto [g, a] : positives) pairs.push_back({set[g].id, set[a].id, 0});
  for (auto [g, a] : negatives) pairs.push_back({set[g].id, set[a].id, 1});
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

// --- synthetic ---------------------------------------------------------------------

namespace {

std::string numbered_id(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c_%04zu", prefix, n);
  return buf;
}

}  // namespace

EmbeddingSet generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.dim < 1) throw InvalidArgument("synthetic dim must be >= 1");
  if (cfg.per_class < 2) throw InvalidArgument("synthetic per_class must be >= 2");
  if (cfg.n_classes < 1) throw InvalidArgument("synthetic n_classes must be >= 1");
  if (!(cfg.noise_sigma >= 0.0)) throw InvalidArgument("synthetic noise_sigma must be >= 0");

  const std::size_t d = cfg.dim;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto draw_map = [&] {
    std::vector<double> m(d * d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& x : m) x = normal(rng) * scale;
    return m;
  };
  const auto map_ground = draw_map();
  const auto map_aerial = cfg.shared_mixing ? map_ground : draw_map();

  std::vector<std::vector<double>> prototypes(cfg.n_classes, std::vector<double>(d));
  for (auto& p : prototypes)
    for (auto& x : p) x = normal(rng);

  auto project = [d](const std::vector<double>& m, const std::vector<double>& p) {
    std::vector<double> out(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += m[r * d + c] * p[c];
      out[r] = acc;
    }
    return out;
  };

  EmbeddingSet set(d);
  for (View view : {View::ground, View::aerial}) {
    const auto& map = view == View::ground ? map_ground : map_aerial;
    const char prefix = view == View::ground ? 'g' : 'a';
    std::size_t n = 0;
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
      const auto centre = project(map, prototypes[c]);
      for (std::size_t i = 0; i < cfg.per_class; ++i, ++n) {
        EmbeddingRecord rec;
        rec.id = numbered_id(prefix, n);
        rec.view = view;
        rec.class_label = "class_" + std::to_string(c);
        rec.vector.resize(d);
        for (std::size_t j = 0; j < d; ++j)
          rec.vector[j] = static_cast<float>(centre[j] + cfg.noise_sigma * normal(rng));
        set.add(std::move(rec));
      }
    }
  }
  return set;
}

EmbeddingSet l2_normalized(const EmbeddingSet& set) {
  EmbeddingSet out(set.dim());
  for (auto rec : set.records()) {
    double sq = 0.0;
    for (float x : rec.vector) sq += static_cast<double>(x) * x;
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (auto& x : rec.vector) x = static_cast<float>(x * inv);
    }
    out.add(std::move(rec));
  }
  return out;
}

EmbeddingSet filter_view(const EmbeddingSet& set, View view) {
  EmbeddingSet out(set.dim());
  for (const auto& rec : set.records())
    if (rec.view == view) out.add(rec);
  return out;
}

}  // namespace cvir
