#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "jointssl/decoder.hpp"
#include "jointssl/encoder.hpp"
#include "jointssl/losses.hpp"

namespace jointssl {

struct ModelConfig {
  EncoderConfig encoder;
  double leaky_slope = 0.01;
  int num_classes = 9;

  DecoderConfig decoder() const { return {encoder, leaky_slope, 1.0}; }
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Autoencoder (ConvNeXt encoder + skip-fed decoder) plus classifier head.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  Model(const Model& other);
  Model& operator=(const Model& other);

  const ModelConfig& config() const { return cfg_; }

  /// Deterministic initialization; encoder, decoder and head draw from
  /// independent streams derived from `seed`.
  void init(std::uint64_t seed);

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }
  ClassifierHead& head() { return head_; }
  const ClassifierHead& head() const { return head_; }

  /// Parameters in a fixed order: encoder, decoder, head.
  const nn::ParamRefs& params() const { return params_; }
  void zero_grad();
  std::size_t parameter_count() const;

  std::vector<double> probabilities(const ImageTensor& x) const;
  int predict(const ImageTensor& x) const;

  /// Flat copy of every parameter value, in params() order.
  std::vector<double> snapshot() const;
  void restore(const std::vector<double>& values);

 private:
  void rebuild_refs();

  ModelConfig cfg_;
  Encoder encoder_;
  Decoder decoder_;
  ClassifierHead head_;
  nn::ParamRefs params_;
};

struct NamedTensor {
  std::vector<int> shape;
  std::vector<double> values;
};
using TensorMap = std::map<std::string, NamedTensor>;

/// Copies matching tensors into the model. Throws WeightImportError listing
/// every layer whose shape differs (and, when `strict`, every missing or
/// unknown name). Returns the number of tensors imported.
std::size_t import_weights(Model& model, const TensorMap& weights, bool strict = true);

// Checkpoint container:
//   8 bytes  magic "JSSLCKPT"
//   u32      format version (1)
//   u64      header length in bytes
//   header   UTF-8 JSON: {"model": ModelConfig, "meta": {...},
//            "tensors": [{"name", "shape", "offset", "count"}, ...]}
//   payload  float64 little-endian values; offsets are element offsets
//            relative to the payload start.

struct Checkpoint {
  ModelConfig model;
  nlohmann::json meta;
  TensorMap tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Reads a checkpoint, builds the model it describes and loads its weights.
Model load_model(const std::filesystem::path& path);

}  // namespace jointssl
