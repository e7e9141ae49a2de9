#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jointssl/augment.hpp"
#include "jointssl/dataset.hpp"
#include "jointssl/losses.hpp"
#include "jointssl/model.hpp"
#include "jointssl/split.hpp"

namespace jointssl {

/// Which loss terms are trained and how the second view is built.
enum class Variant {
  ssl_scr,     // transformed second view; CE + CR + Sim
  ssl_tfsim,   // transformed second view; CE + CR
  ssl,         // second view is the untransformed image; CE + CR
  supervised,  // CE on noisy labeled inputs only
};

std::string to_string(Variant v);
/// Accepts "ssl-scr", "ssl+tfsim", "ssl", "supervised". Throws ConfigError.
Variant variant_from_string(const std::string& s);

struct VariantTerms {
  bool consistency = false;
  bool similarity = false;
  bool transform = false;
  bool uses_unlabeled = false;
};
VariantTerms terms_of(Variant v);

struct TrainConfig {
  double base_lr = 0.01;
  double lr_decay_factor = 0.9;
  int lr_decay_every = 10;
  int epochs = 60;
  double momentum = 0.0;
  double dampening = 0.0;
  int batch_size_labeled = 8;
  /// 0 means batch_size_labeled * plan ratio.
  int batch_size_unlabeled = 0;
  NoiseSpec noise;
  LossWeights weights;
  Variant variant = Variant::ssl_scr;
  SimilarityTransformConfig transform;
  L2Normalization l2 = L2Normalization::per_element;
  /// When false the cross-entropy term is logged but not trained.
  bool train_classifier = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  /// Loss weights actually applied by the variant (unused terms are zero).
  LossWeights effective_weights() const;
  int unlabeled_batch_size(int ratio) const;
};

nlohmann::json to_json(const TrainConfig& cfg);

/// base_lr * factor^floor(epoch / every).
double lr_at(int epoch, double base_lr, double factor = 0.9, int every = 10);

/// Index batches into the labeled and unlabeled pools.
struct Batch {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

/// Labeled samples are drawn without replacement once per epoch, so an epoch
/// is ceil(n_labeled / batch_labeled) steps. The unlabeled pool is consumed as
/// an independent stream of reshuffled passes that carries over epoch
/// boundaries. Both streams depend only on (seed, epoch).
class BatchSampler {
 public:
  BatchSampler(std::size_t n_labeled, std::size_t n_unlabeled, int batch_labeled, int batch_unlabeled,
               std::uint64_t seed);

  int steps_per_epoch() const;
  std::vector<Batch> compose_epoch(int epoch) const;

 private:
  std::size_t n_labeled_;
  std::size_t n_unlabeled_;
  int batch_labeled_;
  int batch_unlabeled_;
  std::uint64_t seed_;
};

/// Images of one fold, ready for training. Unlabeled entries never carry a
/// label; rotated copies are owned here.
struct TrainingPools {
  std::vector<const ImageTensor*> labeled;
  std::vector<int> labels;
  std::vector<const ImageTensor*> unlabeled;
  std::vector<const ImageTensor*> validation;
  std::vector<int> validation_labels;
  std::vector<std::unique_ptr<ImageTensor>> owned;
};

TrainingPools materialize_pools(const Dataset& dataset, const SplitPlan& plan);

/// Images of one optimization step.
struct StepBatch {
  std::vector<const ImageTensor*> labeled;
  std::vector<int> labels;
  std::vector<const ImageTensor*> unlabeled;
  int epoch = 0;
  int step = 0;
};

/// Batch means of the three loss terms. ce averages over labeled samples,
/// cr and sim over all samples of the step.
struct StepLosses {
  LossComponents parts;
  double total = 0.0;
};

/// Zeroes and fills parameter gradients with the gradient of the weighted
/// batch loss. Terms with zero effective weight contribute nothing. Throws
/// DivergenceError if a term is not finite.
StepLosses accumulate_gradients(Model& model, const StepBatch& batch, const TrainConfig& cfg);

/// SGD with torch semantics for momentum and dampening.
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum = 0.0, double dampening = 0.0);
  void step(const nn::ParamRefs& params, double lr);

 private:
  double momentum_;
  double dampening_;
  std::vector<std::vector<double>> velocity_;
};

/// accumulate_gradients followed by one optimizer step at `lr`. The update is
/// skipped when the loss is not finite; DivergenceError then carries the
/// component values, lr and epoch.
StepLosses train_step(Model& model, SgdOptimizer& opt, const StepBatch& batch, const TrainConfig& cfg,
                      double lr);

double accuracy(const Model& model, const std::vector<const ImageTensor*>& images,
                const std::vector<int>& labels);

struct EpochRecord {
  int epoch = 0;
  LossComponents parts;
  double total = 0.0;
  double lr = 0.0;
  double val_accuracy = 0.0;
};

struct TrainState {
  explicit TrainState(Model m) : model(std::move(m)) {}

  Model model;  // best validation snapshot
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_accuracy = -1.0;
  std::vector<EpochRecord> log;
  std::optional<std::filesystem::path> checkpoint;
  nlohmann::json manifest;
};

struct FitOptions {
  /// When set, writes manifest.json, epochs.csv and best.ckpt here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Starting weights; a fresh seeded init when empty.
  std::optional<Model> initial;
};

/// Experiment manifest: every resolved setting plus the code version.
nlohmann::json make_manifest(const TrainConfig& cfg, const ModelConfig& model_cfg, const SplitPlan& plan);

/// Trains for cfg.epochs epochs, validating after each and keeping the model
/// with the best validation accuracy (earliest epoch wins ties).
TrainState fit(const Dataset& dataset, const SplitPlan& plan, const TrainConfig& cfg,
               const ModelConfig& model_cfg, const FitOptions& options = {});

/// Software version stamped into manifests and checkpoints.
std::string version_string();

}  // namespace jointssl
