#include "cvir/nn/model_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "cvir/base64.hpp"
#include "cvir/error.hpp"

namespace cvir::nn {

void write_model_file(const ModelFile& model, std::ostream& out) {
  auto manifest = model.manifest;
  manifest["param_count"] = model.params.size();

  std::vector<std::uint8_t> bytes(model.params.size() * 4);
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(model.params[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  out << manifest.dump() << '\n' << base64_encode(bytes) << '\n';
  if (!out) throw Error("failed writing model stream");
}

void write_model_file(const ModelFile& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_model_file(model, out);
}

ModelFile read_model_file(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing model manifest");
  ModelFile model;
  try {
    model.manifest = nlohmann::ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ParseError(1, std::string("malformed model manifest: ") + ex.what());
  }
  if (!model.manifest.is_object() || !model.manifest.contains("param_count") ||
      !model.manifest["param_count"].is_number_unsigned())
    throw ParseError(1, "model manifest lacks param_count");
  const auto count = model.manifest["param_count"].get<std::size_t>();

  std::string blob;
  std::getline(in, blob);
  if (!blob.empty() && blob.back() == '\r') blob.pop_back();
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(blob);
  } catch (const InvalidArgument& ex) {
    throw ParseError(2, ex.what());
  }
  if (bytes.size() != count * 4) {
    throw ParseError(2, "parameter blob holds " + std::to_string(bytes.size() / 4) + " floats, manifest says " +
                            std::to_string(count));
  }
  model.params.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    model.params[i] = std::bit_cast<float>(bits);
  }
  model.manifest.erase("param_count");
  return model;
}

ModelFile read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open model file '" + path.string() + "'");
  return read_model_file(in);
}

}  // namespace cvir::nn
