#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

namespace cvir::nn {

/// On-disk model: line 1 is a JSON manifest, line 2 is the parameter blob as
/// base64 of little-endian IEEE-754 32-bit floats in declaration order.
/// The writer adds "param_count" to the manifest; the reader checks it.
struct ModelFile {
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  std::vector<float> params;
};

void write_model_file(const ModelFile& model, std::ostream& out);
void write_model_file(const ModelFile& model, const std::filesystem::path& path);
/// Throws ParseError on a malformed file.
ModelFile read_model_file(std::istream& in);
ModelFile read_model_file(const std::filesystem::path& path);

}  // namespace cvir::nn
