#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "jointssl/dataset.hpp"

namespace jointssl {

/// One entry of the selected unlabeled stream. rotation_deg == 0 refers to the
/// de-labeled image itself, anything else to a rotated copy of it.
struct UnlabeledItem {
  std::string source_id;
  double rotation_deg = 0.0;

  bool operator==(const UnlabeledItem&) const = default;
};

/// Assignment of the samples of one cross-validation fold to the four roles.
/// The id lists labeled_train, unlabeled_train, validation and test are
/// pairwise disjoint and together cover the dataset.
struct SplitPlan {
  int fold_index = 0;
  int k = 5;
  std::size_t dataset_size = 0;
  std::uint64_t seed = 0;

  std::vector<std::string> labeled_train;
  std::vector<std::string> unlabeled_train;  // de-labeled part of the train partition
  std::vector<std::string> validation;
  std::vector<std::string> test;

  /// Share of the full dataset whose labels are kept.
  double label_fraction = 0.0;
  /// Labeled:unlabeled = 1:ratio.
  int ratio = 5;

  /// Unlabeled stream consumed by the trainer, filled by build_unlabeled_pool.
  std::vector<UnlabeledItem> selected_unlabeled;
  double achieved_ratio = 0.0;

  std::vector<std::string> train_partition() const;

  bool operator==(const SplitPlan&) const = default;
};

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const nlohmann::json& j);

/// Per-class fold counts for stratified k-fold. counts[c][f] is the number of
/// class-c samples in fold f. Fold sizes differ by at most one (the first
/// N mod k folds are larger). For every class, every single fold and every
/// cyclically adjacent fold pair stays within one sample of its proportional
/// share. Throws StratificationError if a class has fewer than k samples or
/// no such assignment is found.
std::vector<std::vector<int>> stratified_fold_counts(const std::vector<int>& class_counts, int k);

/// Fold assignment for every sample index given its label.
std::vector<int> stratified_fold_assignment(const std::vector<int>& labels, int num_classes, int k,
                                            std::uint64_t seed);

/// k plans; plan i tests on fold i, validates on fold (i + 1) mod k and trains
/// on the rest. All train samples start out labeled (label_fraction is the
/// train share). Requires k >= 3.
std::vector<SplitPlan> stratified_kfold(const Dataset& dataset, int k, std::uint64_t seed);

/// Number of labeled samples kept for `fraction` of a dataset of size n.
std::size_t labeled_count(double fraction, std::size_t n);

/// Keeps a class-stratified subset of round(fraction * N) train samples
/// labeled (largest-remainder apportionment) and moves the rest of the train
/// partition into unlabeled_train. Throws ConfigError if the subset does not
/// fit in the train partition or would be empty.
SplitPlan apply_label_scarcity(const Dataset& dataset, const SplitPlan& plan, double fraction,
                               std::uint64_t seed);

/// Selects ratio * |labeled_train| unlabeled items from the de-labeled pool,
/// optionally expanded by `rotated_copies` rotated copies per image with
/// angles drawn from U(-180, 180). A pool that is too small is used whole and
/// logged; achieved_ratio records the outcome. Throws ConfigError on an empty
/// pool or a non-positive ratio.
SplitPlan build_unlabeled_pool(const SplitPlan& plan, bool augment_rotations, std::uint64_t seed,
                               int rotated_copies = 1);

}  // namespace jointssl
