#include "jointssl/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "jointssl/errors.hpp"
#include "jointssl/random.hpp"

namespace jointssl {

namespace {

using nlohmann::json;

// Strict view of one JSON object: every key read is recorded, and finish()
// rejects whatever is left.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("{}.{}: {}", path_, key, e.what()));
    }
  }

  void read_path(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(fmt::format("unknown key '{}.{}'", path_, k));
    }
  }

 private:
  std::string where() const { return path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void expect_fixed(Section& s, const char* key, const std::string& value) {
  std::string got = value;
  s.read(key, got);
  if (got != value) throw ConfigError(fmt::format("{} must be '{}' (only supported value), got '{}'", key, value, got));
}

SimilarityTransformConfig parse_transform(Section s) {
  SimilarityTransformConfig t;
  s.read("rotation_deg", t.rotation_deg);
  s.read("shift_h", t.shift_h);
  s.read("shift_v", t.shift_v);
  s.read("shift_p", t.shift_p);
  s.read("scale_min", t.scale_min);
  s.read("scale_max", t.scale_max);
  s.read("scale_p", t.scale_p);
  s.read("hflip_p", t.hflip_p);
  s.read("vflip_p", t.vflip_p);
  s.read("sat_bright_min", t.sat_bright_min);
  s.read("saturation_max", t.saturation_max);
  s.read("saturation_p", t.saturation_p);
  s.read("brightness_max", t.brightness_max);
  s.read("brightness_p", t.brightness_p);
  expect_fixed(s, "interpolation", "bilinear");
  expect_fixed(s, "padding", "reflect");
  expect_fixed(s, "order", "geometric,intensity,noise");
  s.finish();
  return t;
}

TrainConfig parse_train(Section s) {
  TrainConfig t;
  s.read("base_lr", t.base_lr);
  s.read("lr_decay_factor", t.lr_decay_factor);
  s.read("lr_decay_every", t.lr_decay_every);
  s.read("epochs", t.epochs);
  s.read("momentum", t.momentum);
  s.read("dampening", t.dampening);
  s.read("batch_size_labeled", t.batch_size_labeled);
  s.read("batch_size_unlabeled", t.batch_size_unlabeled);
  {
    Section n = s.child("noise");
    n.read("mean", t.noise.mean);
    n.read("std", t.noise.std);
    n.finish();
  }
  {
    Section w = s.child("weights");
    w.read("lambda_cr", t.weights.lambda_cr);
    w.read("lambda_sim", t.weights.lambda_sim);
    w.finish();
  }
  std::string variant = to_string(t.variant);
  s.read("variant", variant);
  t.variant = variant_from_string(variant);
  std::string l2 = "per_element";
  s.read("l2", l2);
  if (l2 == "per_element") {
    t.l2 = L2Normalization::per_element;
  } else if (l2 == "raw_sum") {
    t.l2 = L2Normalization::raw_sum;
  } else {
    throw ConfigError("train.l2 must be 'per_element' or 'raw_sum', got '" + l2 + "'");
  }
  s.read("train_classifier", t.train_classifier);
  t.transform = parse_transform(s.child("transform"));
  s.finish();
  return t;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.source != "synthetic" && dataset.source != "deepweeds") {
    throw ConfigError("dataset.source must be 'synthetic' or 'deepweeds', got '" + dataset.source + "'");
  }
  if (dataset.source == "deepweeds" && (dataset.image_dir.empty() || dataset.labels_file.empty())) {
    throw ConfigError("dataset.image_dir and dataset.labels_file are required for deepweeds");
  }
  if (dataset.n_per_class < 1) throw ConfigError("dataset.n_per_class must be >= 1");
  if (dataset.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
  const int multiple = model.model.encoder.input_multiple();
  if (dataset.resolution < multiple || dataset.resolution % multiple != 0) {
    throw ConfigError(fmt::format("dataset.resolution must be a positive multiple of {}, got {}", multiple,
                                  dataset.resolution));
  }
  if (split.k < 3) throw ConfigError("split.k must be >= 3");
  if (!(split.fraction > 0.0 && split.fraction <= 1.0)) throw ConfigError("split.fraction must be in (0, 1]");
  if (split.ratio < 1) throw ConfigError("split.ratio must be >= 1");
  if (split.rotated_copies < 0) throw ConfigError("split.rotated_copies must be >= 0");
  model.model.encoder.validate();
  if (model.model.num_classes != dataset.num_classes) throw ConfigError("model classes differ from dataset classes");
  train.validate();
  if (eval.sigmas.empty()) throw ConfigError("eval.sigmas must not be empty");
  for (std::size_t i = 0; i < eval.sigmas.size(); ++i) {
    if (!(eval.sigmas[i] >= 0.0)) throw ConfigError("eval.sigmas must be >= 0");
    if (i > 0 && eval.sigmas[i] < eval.sigmas[i - 1]) throw ConfigError("eval.sigmas must be non-decreasing");
  }
  if (grid.variants.empty() || grid.fractions.empty() || grid.ratios.empty() || grid.folds.empty()) {
    throw ConfigError("grid lists must not be empty");
  }
  for (double f : grid.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("grid.fractions must be in (0, 1]");
  }
  for (int r : grid.ratios) {
    if (r < 1) throw ConfigError("grid.ratios must be >= 1");
  }
  for (int f : grid.folds) {
    if (f < 0 || f >= split.k) throw ConfigError(fmt::format("grid fold {} outside [0, {})", f, split.k));
  }
  for (double lr : grid.base_lrs) {
    if (!(lr > 0.0)) throw ConfigError("grid.base_lrs must be > 0");
  }
}

std::uint64_t ExperimentConfig::dataset_seed() const { return derive_seed(seed, 101); }
std::uint64_t ExperimentConfig::split_seed() const { return derive_seed(seed, 102); }
std::uint64_t ExperimentConfig::train_seed() const { return derive_seed(seed, 103); }
std::uint64_t ExperimentConfig::eval_seed() const { return derive_seed(seed, 104); }

TrainConfig ExperimentConfig::resolved_train() const {
  TrainConfig t = train;
  t.seed = train_seed();
  return t;
}

GridSpec ExperimentConfig::grid_spec() const {
  GridSpec g;
  g.variants = grid.variants;
  g.fractions = grid.fractions;
  g.ratios = grid.ratios;
  g.folds = grid.folds;
  g.base_lrs = grid.base_lrs;
  g.sigmas = eval.sigmas;
  return g;
}

GridContext ExperimentConfig::grid_context() const {
  GridContext c;
  c.k = split.k;
  c.split_seed = split_seed();
  c.augment_rotations = split.augment_rotations;
  c.rotated_copies = split.rotated_copies;
  c.train = resolved_train();
  c.model = model.model;
  c.eval_seed = eval_seed();
  c.out_dir = output_dir / "grid";
  return c;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section top(root, "config");
  top.read("seed", cfg.seed);
  top.read_path("output_dir", cfg.output_dir);

  {
    Section d = top.child("dataset");
    d.read("source", cfg.dataset.source);
    d.read_path("image_dir", cfg.dataset.image_dir);
    d.read_path("labels_file", cfg.dataset.labels_file);
    d.read("n_per_class", cfg.dataset.n_per_class);
    d.read("num_classes", cfg.dataset.num_classes);
    d.read("resolution", cfg.dataset.resolution);
    d.finish();
  }
  {
    Section s = top.child("split");
    s.read("k", cfg.split.k);
    s.read("fraction", cfg.split.fraction);
    s.read("ratio", cfg.split.ratio);
    s.read("augment_rotations", cfg.split.augment_rotations);
    s.read("rotated_copies", cfg.split.rotated_copies);
    s.finish();
  }
  {
    Section m = top.child("model");
    m.read("scale", cfg.model.scale);
    if (cfg.model.scale == "micro" || cfg.model.scale == "custom") {
      cfg.model.model.encoder = EncoderConfig::micro();
    } else if (cfg.model.scale == "base") {
      cfg.model.model.encoder = EncoderConfig::base();
    } else {
      throw ConfigError("model.scale must be 'micro', 'base' or 'custom', got '" + cfg.model.scale + "'");
    }
    if (cfg.model.scale != "custom" && (m.has("stage_depths") || m.has("stage_widths"))) {
      throw ConfigError("model.stage_depths / stage_widths need model.scale = 'custom'");
    }
    m.read("stage_depths", cfg.model.model.encoder.stage_depths);
    m.read("stage_widths", cfg.model.model.encoder.stage_widths);
    m.read("dw_kernel", cfg.model.model.encoder.dw_kernel);
    m.read("expansion", cfg.model.model.encoder.expansion);
    m.read("patch", cfg.model.model.encoder.patch);
    m.read("leaky_slope", cfg.model.model.leaky_slope);
    m.read_path("pretrained", cfg.model.pretrained);
    m.read("pretrained_strict", cfg.model.pretrained_strict);
    m.finish();
  }
  cfg.train = parse_train(top.child("train"));
  {
    Section e = top.child("eval");
    e.read("sigmas", cfg.eval.sigmas);
    e.read("noise_mean", cfg.eval.noise_mean);
    e.finish();
  }
  {
    Section g = top.child("grid");
    std::vector<std::string> variants;
    for (auto v : cfg.grid.variants) variants.push_back(to_string(v));
    g.read("variants", variants);
    cfg.grid.variants.clear();
    for (const auto& v : variants) cfg.grid.variants.push_back(variant_from_string(v));
    g.read("fractions", cfg.grid.fractions);
    g.read("ratios", cfg.grid.ratios);
    g.read("folds", cfg.grid.folds);
    g.read("base_lrs", cfg.grid.base_lrs);
    g.finish();
  }
  top.finish();

  cfg.model.model.num_classes = cfg.dataset.num_classes;
  cfg.train.seed = cfg.train_seed();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_experiment_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json train = to_json(c.train);
  train.erase("seed");  // derived from the top-level seed
  std::vector<std::string> variants;
  for (auto v : c.grid.variants) variants.push_back(to_string(v));
  const auto& enc = c.model.model.encoder;
  json model = {{"scale", c.model.scale},
                {"dw_kernel", enc.dw_kernel},
                {"expansion", enc.expansion},
                {"patch", enc.patch},
                {"leaky_slope", c.model.model.leaky_slope},
                {"pretrained", c.model.pretrained.string()},
                {"pretrained_strict", c.model.pretrained_strict}};
  if (c.model.scale == "custom") {
    model["stage_depths"] = enc.stage_depths;
    model["stage_widths"] = enc.stage_widths;
  }
  return {{"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"dataset",
           {{"source", c.dataset.source},
            {"image_dir", c.dataset.image_dir.string()},
            {"labels_file", c.dataset.labels_file.string()},
            {"n_per_class", c.dataset.n_per_class},
            {"num_classes", c.dataset.num_classes},
            {"resolution", c.dataset.resolution}}},
          {"split",
           {{"k", c.split.k},
            {"fraction", c.split.fraction},
            {"ratio", c.split.ratio},
            {"augment_rotations", c.split.augment_rotations},
            {"rotated_copies", c.split.rotated_copies}}},
          {"model", model},
          {"train", train},
          {"eval", {{"sigmas", c.eval.sigmas}, {"noise_mean", c.eval.noise_mean}}},
          {"grid",
           {{"variants", variants},
            {"fractions", c.grid.fractions},
            {"ratios", c.grid.ratios},
            {"folds", c.grid.folds},
            {"base_lrs", c.grid.base_lrs}}}};
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.source == "synthetic") {
    return generate_synthetic(cfg.dataset.n_per_class, cfg.dataset.num_classes, cfg.dataset.resolution,
                              cfg.dataset_seed());
  }
  DeepWeedsOptions opts;
  opts.resolution = cfg.dataset.resolution;
  opts.num_classes = cfg.dataset.num_classes;
  Dataset ds = load_deepweeds(cfg.dataset.image_dir, cfg.dataset.labels_file, opts);
  const auto counts = ds.class_counts();
  for (int c = 0; c < ds.num_classes(); ++c) {
    spdlog::info("class {} ({}): {} samples", c, ds.label_space.classes[c], counts[c]);
  }
  return ds;
}

std::vector<SplitPlan> prepare_splits(const Dataset& dataset, const ExperimentConfig& cfg) {
  auto plans = stratified_kfold(dataset, cfg.split.k, cfg.split_seed());
  for (auto& plan : plans) {
    plan = apply_label_scarcity(dataset, plan, cfg.split.fraction, cfg.split_seed());
    plan.ratio = cfg.split.ratio;
    if (plan.unlabeled_train.empty()) {
      spdlog::warn("fold {}: no de-labeled samples, unlabeled selection left empty", plan.fold_index);
      continue;
    }
    plan = build_unlabeled_pool(plan, cfg.split.augment_rotations, cfg.split_seed(), cfg.split.rotated_copies);
  }
  return plans;
}

}  // namespace jointssl
