#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jointssl/tensor.hpp"

namespace jointssl {

struct Sample {
  std::string id;
  ImageTensor image;          // H x W x 3, values in [0, 1]
  std::optional<int> label;   // present iff the sample is in the labeled pool
};

struct LabelSpace {
  std::vector<std::string> classes;
  int size() const { return static_cast<int>(classes.size()); }
};

/// The nine DeepWeeds classes (eight species and the negative class).
LabelSpace deepweeds_label_space();

enum class Provenance { deepweeds, synthetic };

struct Dataset {
  std::vector<Sample> samples;
  LabelSpace label_space;
  Provenance provenance = Provenance::synthetic;

  int num_classes() const { return label_space.size(); }
  /// Label of every sample; throws ContractError if one is unlabeled.
  std::vector<int> labels() const;
  std::vector<int> class_counts() const;
  /// Index lookup by id.
  std::map<std::string, std::size_t> index() const;
};

struct DeepWeedsOptions {
  int resolution = 64;
  int num_classes = 9;
  /// Class names used when the labels file carries no species column.
  LabelSpace label_space = deepweeds_label_space();
};

/// Reads a labels CSV (filename, integer label, species; header optional) and
/// the referenced images. Images are resized to `resolution` squared and
/// scaled by 1/255.
/// Throws IngestionError for an unreadable file (naming it) and SchemaError
/// for malformed rows or labels outside [0, num_classes).
Dataset load_deepweeds(const std::filesystem::path& image_dir,
                       const std::filesystem::path& labels_file,
                       const DeepWeedsOptions& options = {});

/// Number of distinct shapes the synthetic generator can draw.
inline constexpr int kSyntheticShapeCount = 12;

/// Desk-scale stand-in for DeepWeeds: class k is a distinct geometric shape
/// drawn at a random position, size and rotation over a textured random
/// background. Its hue is drawn around a class-specific centre with overlap
/// into the neighbouring classes. Deterministic given `seed`.
/// Throws ConfigError if resolution % 4 != 0, n_per_class < 1, or
/// num_classes is outside [2, kSyntheticShapeCount].
Dataset generate_synthetic(int n_per_class, int num_classes, int resolution, std::uint64_t seed);

}  // namespace jointssl
