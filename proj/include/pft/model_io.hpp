#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>

#include "json.hpp"
#include "pft/core_model.hpp"

namespace pft {

inline constexpr int kModelFormatVersion = 1;

struct TrainingMetadata {
  std::uint64_t seed = 0;
  double lambda = 0.0;
  int epochs = 0;
  double learning_rate = 0.0;
  double momentum = 0.0;
  bool l2_on_biases = false;
  bool converged = false;
  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

// On-disk model. Exactly one of float_params / quant_params is set.
struct ModelFile {
  std::optional<std::uint8_t> key_byte;
  TrainingMetadata training;
  std::optional<FloatParams> float_params;
  std::optional<QuantParams> quant_params;

  const Topology& topology() const;
  const QuantParams& quantized() const;
  const FloatParams& real() const;
};

nlohmann::ordered_json to_json(const ModelFile& m);
ModelFile model_from_json(const nlohmann::json& j);

void save_model(const ModelFile& m, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

// Writes text exactly as given; used for every CSV/JSON artifact so output is
// byte-stable.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string dump_json(const nlohmann::ordered_json& j);

// 64-bit FNV-1a over the canonical JSON serialization of the parameters.
std::string model_hash(const QuantParams& q);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace pft
