#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "jointssl/evaluation.hpp"
#include "jointssl/model.hpp"
#include "jointssl/trainer.hpp"

namespace jointssl {

struct DatasetSection {
  std::string source = "synthetic";  // "synthetic" or "deepweeds"
  std::filesystem::path image_dir;
  std::filesystem::path labels_file;
  int n_per_class = 50;
  int num_classes = 9;
  int resolution = 64;
};

struct SplitSection {
  int k = 5;
  double fraction = 0.10;
  int ratio = 5;
  bool augment_rotations = true;
  int rotated_copies = 1;
};

struct ModelSection {
  std::string scale = "micro";  // "micro", "base" or "custom"
  ModelConfig model;
  /// Optional checkpoint whose tensors seed the model before training.
  std::filesystem::path pretrained;
  bool pretrained_strict = false;
};

struct EvalSection {
  std::vector<double> sigmas{0.0, 0.05, 0.075, 0.1, 0.125};
  double noise_mean = 0.0;
};

struct GridSection {
  std::vector<Variant> variants{Variant::ssl_scr, Variant::ssl_tfsim, Variant::ssl, Variant::supervised};
  std::vector<double> fractions{0.20, 0.15, 0.10, 0.05};
  std::vector<int> ratios{5, 11};
  std::vector<int> folds{0, 1, 2, 3, 4};
  std::vector<double> base_lrs;  // empty: train.base_lr
};

/// Whole experiment. Every random stream derives from `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  DatasetSection dataset;
  SplitSection split;
  ModelSection model;
  TrainConfig train;
  EvalSection eval;
  GridSection grid;

  /// Throws ConfigError on any out-of-range or inconsistent value.
  void validate() const;

  std::uint64_t dataset_seed() const;
  std::uint64_t split_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t eval_seed() const;

  /// Train section with the derived training seed filled in.
  TrainConfig resolved_train() const;
  GridSpec grid_spec() const;
  GridContext grid_context() const;
};

/// Parses JSON with // and /* */ comments. Unknown keys, wrong types and
/// malformed text throw ConfigError naming the key path or position.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Fully resolved configuration, suitable for re-parsing.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Synthetic generation or DeepWeeds ingestion as configured.
Dataset load_dataset(const ExperimentConfig& cfg);

/// k stratified plans with label scarcity and the unlabeled selection
/// applied per the split section. An empty de-labeled pool leaves the
/// unlabeled selection empty (logged).
std::vector<SplitPlan> prepare_splits(const Dataset& dataset, const ExperimentConfig& cfg);

}  // namespace jointssl
