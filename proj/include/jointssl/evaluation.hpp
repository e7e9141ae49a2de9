#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "jointssl/dataset.hpp"
#include "jointssl/model.hpp"
#include "jointssl/trainer.hpp"

namespace jointssl {

/// C x C counts; rows are true classes, columns predictions.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;

  explicit ConfusionMatrix(int c = 0) : classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}
  std::int64_t& at(int truth, int predicted) { return counts[static_cast<std::size_t>(truth) * classes + predicted]; }
  std::int64_t at(int truth, int predicted) const {
    return counts[static_cast<std::size_t>(truth) * classes + predicted];
  }
  void add(int truth, int predicted);
  std::int64_t total() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                           int classes);

/// Labeled images to evaluate on.
struct EvalSet {
  std::vector<const ImageTensor*> images;
  std::vector<int> labels;
};

/// Throws ContractError if an id is unknown or its sample is unlabeled.
EvalSet make_eval_set(const Dataset& dataset, const std::vector<std::string>& ids);

/// Argmax predictions of the model on clean images.
ConfusionMatrix confusion(const Model& model, const EvalSet& set);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  // Set when the metric had a zero denominator and was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct ConditionTags {
  std::string variant;
  double label_fraction = 0.0;
  int ratio = 0;
  int fold = 0;
  double sigma = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;     // unweighted mean over classes
  double weighted_f1 = 0.0;  // support-weighted mean over classes
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  ConditionTags tags;
  ConfusionMatrix cm;
};

/// Per-class precision, recall and F1, accuracy = trace / total. Throws
/// ContractError on an empty matrix.
MetricsReport metrics(const ConfusionMatrix& cm);

nlohmann::json to_json(const MetricsReport& r);

/// One report per sigma. Each sigma draws from its own stream derived from
/// (seed, sigma), so a sigma gives the same noise wherever it sits in the list;
/// sigma = 0 reproduces the clean evaluation exactly. Throws ConfigError if
/// the list is empty, negative or not non-decreasing.
std::vector<MetricsReport> noise_sweep(const Model& model, const EvalSet& set, const std::vector<double>& sigmas,
                                       std::uint64_t seed, double noise_mean = 0.0);

/// Mean squared per-element error between the reconstruction of each clean
/// image and the image.
double reconstruction_error(const Model& model, const std::vector<const ImageTensor*>& images);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

// ------------------------------------------------------------------ ablation grid

struct GridSpec {
  std::vector<Variant> variants{Variant::ssl_scr, Variant::ssl_tfsim, Variant::ssl, Variant::supervised};
  std::vector<double> fractions{0.20, 0.15, 0.10, 0.05};
  std::vector<int> ratios{5, 11};
  std::vector<int> folds{0, 1, 2, 3, 4};
  std::vector<double> sigmas{0.0, 0.05, 0.075, 0.1, 0.125};
  std::vector<double> base_lrs;  // empty: the context's train.base_lr

  std::size_t cell_count() const {
    return variants.size() * fractions.size() * ratios.size() * folds.size() * std::max<std::size_t>(1, base_lrs.size());
  }
};

struct GridContext {
  int k = 5;
  std::uint64_t split_seed = 0;
  bool augment_rotations = true;
  int rotated_copies = 1;
  TrainConfig train;  // variant is overridden per cell
  ModelConfig model;
  std::uint64_t eval_seed = 0;
  std::filesystem::path out_dir;
  /// Skip cells whose manifest hash already appears in the results table.
  bool resume = false;
  /// Keep per-cell checkpoints and logs under out_dir/cells/<hash>.
  bool keep_cell_artifacts = true;
};

struct GridRow {
  std::string variant;
  double fraction = 0.0;
  int ratio = 0;
  int fold = 0;
  double base_lr = 0.0;
  double sigma = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::string manifest_hash;
};

struct GridFailure {
  std::string manifest_hash;
  std::string variant;
  double fraction = 0.0;
  int ratio = 0;
  int fold = 0;
  double base_lr = 0.0;
  std::string error;
};

struct GridResult {
  std::vector<GridRow> rows;  // every row of the table, including resumed ones
  std::vector<GridFailure> failures;
  std::size_t cells_run = 0;
  std::size_t cells_skipped = 0;
  std::filesystem::path results_csv;
};

inline constexpr const char* kResultsHeader =
    "variant,fraction,ratio,fold,base_lr,sigma,accuracy,macro_f1,weighted_f1,per_class_f1,manifest_hash";

std::string format_row(const GridRow& row);
/// Parses a results CSV written by run_ablation_grid (header required).
std::vector<GridRow> read_results(const std::filesystem::path& csv);

/// Trains and evaluates every cell. Rows go to out_dir/results.csv (one
/// atomic append per cell), failures to out_dir/failures.csv, plots to
/// out_dir/plots. A failing cell is recorded and the grid moves on.
GridResult run_ablation_grid(const Dataset& dataset, const GridSpec& grid, const GridContext& ctx);

/// Writes the summary plots of a results table: accuracy and macro-F1 vs
/// label fraction, accuracy vs sigma, and per-variant bars. Returns the files.
std::vector<std::filesystem::path> write_grid_plots(const std::vector<GridRow>& rows,
                                                    const std::filesystem::path& dir);

}  // namespace jointssl
