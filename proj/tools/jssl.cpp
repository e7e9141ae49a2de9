// Command-line entry points: prepare, train, evaluate, grid.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>
#include <sstream>

#include "jointssl/config.hpp"
#include "jointssl/errors.hpp"
#include "jointssl/evaluation.hpp"
#include "jointssl/model.hpp"
#include "jointssl/plots.hpp"
#include "jointssl/split.hpp"
#include "jointssl/trainer.hpp"

namespace fs = std::filesystem;
using namespace jointssl;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kRuntime = 2, kIo = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int fold = 0;
  std::string checkpoint;
  bool resume = false;
  bool verbose = false;
};

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.train.seed = cfg.train_seed();
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

fs::path split_file(const ExperimentConfig& cfg, int fold) {
  return cfg.output_dir / "splits" / fmt::format("fold_{}.json", fold);
}

void write_json(const fs::path& path, const nlohmann::json& j) { plots::write_text(path, j.dump(2) + "\n"); }

SplitPlan load_plan(const ExperimentConfig& cfg, int fold, const Dataset& dataset) {
  if (fold < 0 || fold >= cfg.split.k) throw ConfigError(fmt::format("--fold {} outside [0, {})", fold, cfg.split.k));
  const fs::path path = split_file(cfg, fold);
  std::ifstream in(path);
  if (!in) throw IoError("split file " + path.string() + " not found; run 'prepare' first");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  SplitPlan plan = split_plan_from_json(j);
  if (plan.dataset_size != dataset.samples.size()) {
    throw ConfigError(path.string() + " was prepared for a different dataset; rerun 'prepare'");
  }
  return plan;
}

int cmd_prepare(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Dataset dataset = load_dataset(cfg);
  const auto plans = prepare_splits(dataset, cfg);
  for (const auto& plan : plans) {
    write_json(split_file(cfg, plan.fold_index), to_json(plan));
    spdlog::info("fold {}: {} labeled, {} unlabeled selected (1:{:.2f}), {} validation, {} test", plan.fold_index,
                 plan.labeled_train.size(), plan.selected_unlabeled.size(), plan.achieved_ratio,
                 plan.validation.size(), plan.test.size());
  }
  nlohmann::json summary = {{"samples", dataset.samples.size()},
                            {"classes", dataset.label_space.classes},
                            {"class_counts", dataset.class_counts()},
                            {"provenance", dataset.provenance == Provenance::deepweeds ? "deepweeds" : "synthetic"}};
  write_json(cfg.output_dir / "dataset.json", summary);
  write_json(cfg.output_dir / "config.resolved.json", to_json(cfg));
  std::cout << fmt::format("wrote {} split files to {}\n", plans.size(), (cfg.output_dir / "splits").string());
  return kOk;
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Dataset dataset = load_dataset(cfg);
  const SplitPlan plan = load_plan(cfg, c.fold, dataset);
  FitOptions opts;
  opts.out_dir = cfg.output_dir / "train" / fmt::format("fold_{}", c.fold);
  if (!cfg.model.pretrained.empty()) {
    Model m(cfg.model.model);
    m.init(cfg.train_seed());
    const auto n = import_weights(m, read_checkpoint(cfg.model.pretrained).tensors, cfg.model.pretrained_strict);
    spdlog::info("imported {} tensors from {}", n, cfg.model.pretrained.string());
    opts.initial = m;
  }
  const TrainState state = fit(dataset, plan, cfg.resolved_train(), cfg.model.model, opts);
  std::cout << fmt::format("best validation accuracy {:.4f} at epoch {}; checkpoint {}\n", state.best_val_accuracy,
                           state.best_epoch, state.checkpoint ? state.checkpoint->string() : "-");
  return kOk;
}

int cmd_evaluate(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const fs::path ckpt_path = c.checkpoint.empty()
                                 ? cfg.output_dir / "train" / fmt::format("fold_{}", c.fold) / "best.ckpt"
                                 : fs::path(c.checkpoint);
  if (!fs::exists(ckpt_path)) throw IoError("checkpoint " + ckpt_path.string() + " not found");
  const Checkpoint ck = read_checkpoint(ckpt_path);
  if (!(ck.model == cfg.model.model)) {
    throw ConfigError("checkpoint " + ckpt_path.string() + " holds a model that differs from the configured one");
  }
  const Model model = load_model(ckpt_path);
  const Dataset dataset = load_dataset(cfg);
  const SplitPlan plan = load_plan(cfg, c.fold, dataset);
  const EvalSet test = make_eval_set(dataset, plan.test);

  const std::string variant = ck.meta.contains("train") ? ck.meta["train"].value("variant", "") : "";
  auto tag = [&](MetricsReport& r) {
    r.tags.variant = variant;
    r.tags.label_fraction = plan.label_fraction;
    r.tags.ratio = plan.ratio;
    r.tags.fold = plan.fold_index;
  };
  MetricsReport clean = metrics(confusion(model, test));
  tag(clean);
  auto sweep = noise_sweep(model, test, cfg.eval.sigmas, cfg.eval_seed(), cfg.eval.noise_mean);
  nlohmann::json sweep_json = nlohmann::json::array();
  std::string csv = "sigma,accuracy,macro_f1,weighted_f1,macro_precision,macro_recall\n";
  plots::Series acc{"accuracy", {}}, f1{"macro F1", {}};
  for (auto& r : sweep) {
    tag(r);
    sweep_json.push_back(to_json(r));
    csv += fmt::format("{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.tags.sigma, r.accuracy, r.macro_f1,
                       r.weighted_f1, r.macro_precision, r.macro_recall);
    acc.points.emplace_back(r.tags.sigma, r.accuracy);
    f1.points.emplace_back(r.tags.sigma, r.macro_f1);
  }
  const fs::path dir = cfg.output_dir / "eval" / fmt::format("fold_{}", c.fold);
  write_json(dir / "report.json", {{"checkpoint", ckpt_path.string()},
                                   {"clean", to_json(clean)},
                                   {"noise_sweep", sweep_json},
                                   {"eval_seed", cfg.eval_seed()}});
  plots::write_text(dir / "noise_sweep.csv", csv);
  plots::write_text(dir / "accuracy_vs_sigma.svg",
                    plots::line_chart({"Test metrics under input noise", "noise sigma", "score", std::nullopt},
                                      {acc, f1}));
  std::cout << fmt::format("clean accuracy {:.4f}, macro F1 {:.4f}; reports in {}\n", clean.accuracy, clean.macro_f1,
                           dir.string());
  return kOk;
}

int cmd_grid(const Common& c) {
  const ExperimentConfig cfg = resolve(c);
  const Dataset dataset = load_dataset(cfg);
  GridContext ctx = cfg.grid_context();
  ctx.resume = c.resume;
  const GridResult res = run_ablation_grid(dataset, cfg.grid_spec(), ctx);
  std::cout << fmt::format("grid: {} cells run, {} skipped, {} failed; results in {}\n", res.cells_run,
                           res.cells_skipped, res.failures.size(), res.results_csv.string());
  return res.failures.empty() ? kOk : kRuntime;
}

int run(int (*fn)(const Common&), const Common& c) {
  try {
    return fn(c);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfig;
  } catch (const StratificationError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfig;
  } catch (const WeightImportError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kConfig;
  } catch (const IoError& e) {
    spdlog::error("i/o error: {}", e.what());
    return kIo;
  } catch (const IngestionError& e) {
    spdlog::error("i/o error: {}", e.what());
    return kIo;
  } catch (const SchemaError& e) {
    spdlog::error("i/o error: {}", e.what());
    return kIo;
  } catch (const std::exception& e) {
    spdlog::error("error: {}", e.what());
    return kRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised image classification with joint reconstruction and similarity learning"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config, "Experiment config (JSON with comments)")->required();
    sub->add_option("--seed", c.seed, "Override the master seed");
    sub->add_option("--out", c.out, "Override the output directory");
    sub->add_flag("-v,--verbose", c.verbose, "Debug logging");
  };
  auto* prepare = app.add_subcommand("prepare", "Write the cross-validation split files");
  add_common(prepare);
  auto* train = app.add_subcommand("train", "Train one fold");
  add_common(train);
  train->add_option("--fold", c.fold, "Fold index")->capture_default_str();
  auto* evaluate = app.add_subcommand("evaluate", "Clean and noisy evaluation of a checkpoint");
  add_common(evaluate);
  evaluate->add_option("--fold", c.fold, "Fold index")->capture_default_str();
  evaluate->add_option("--checkpoint", c.checkpoint, "Checkpoint (default: the fold's best.ckpt)");
  auto* grid = app.add_subcommand("grid", "Run the ablation grid");
  add_common(grid);
  grid->add_flag("--resume", c.resume, "Skip cells already in the results table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  spdlog::set_level(c.verbose ? spdlog::level::debug : spdlog::level::info);

  if (*prepare) return run(cmd_prepare, c);
  if (*train) return run(cmd_train, c);
  if (*evaluate) return run(cmd_evaluate, c);
  return run(cmd_grid, c);
}
