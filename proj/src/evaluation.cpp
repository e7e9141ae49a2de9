#include "jointssl/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "jointssl/augment.hpp"
#include "jointssl/errors.hpp"
#include "jointssl/plots.hpp"
#include "jointssl/random.hpp"

namespace jointssl {

namespace {

constexpr std::uint64_t kEvalNoiseStream = 31;

std::vector<int> predict_all(const Model& model, const std::vector<const ImageTensor*>& images) {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto* img : images) out.push_back(model.predict(*img));
  return out;
}

std::string join(const std::vector<double>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += fmt::format("{:.10g}", v[i]);
  }
  return s;
}

void append_atomic(const std::filesystem::path& path, const std::string& block) {
  // One write call per block keeps concurrent appenders from interleaving rows.
  std::ofstream out(path, std::ios::app | std::ios::binary);
  out.write(block.data(), static_cast<std::streamsize>(block.size()));
  out.flush();
  if (!out) throw IoError("cannot append to " + path.string());
}

}  // namespace

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= classes || predicted < 0 || predicted >= classes) {
    throw ContractError(fmt::format("class index out of range: truth {}, predicted {}, C {}", truth, predicted,
                                    classes));
  }
  ++at(truth, predicted);
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (auto v : counts) t += v;
  return t;
}

ConfusionMatrix confusion_from_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                           int classes) {
  if (truth.size() != predicted.size()) throw ContractError("truth and prediction lengths differ");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

EvalSet make_eval_set(const Dataset& dataset, const std::vector<std::string>& ids) {
  const auto index = dataset.index();
  EvalSet set;
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw ContractError("evaluation set names unknown sample '" + id + "'");
    const Sample& s = dataset.samples[it->second];
    if (!s.label) throw ContractError("evaluation sample " + id + " is unlabeled");
    set.images.push_back(&s.image);
    set.labels.push_back(*s.label);
  }
  return set;
}

ConfusionMatrix confusion(const Model& model, const EvalSet& set) {
  return confusion_from_predictions(set.labels, predict_all(model, set.images), model.head().classes());
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.total();
  if (total <= 0) throw ContractError("metrics of an empty confusion matrix");
  MetricsReport r;
  r.cm = cm;
  std::int64_t trace = 0;
  for (int c = 0; c < cm.classes; ++c) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < cm.classes; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::int64_t tp = cm.at(c, c);
    trace += tp;
    ClassMetrics m;
    m.support = row;
    if (col > 0) {
      m.precision = static_cast<double>(tp) / static_cast<double>(col);
    } else {
      m.precision_undefined = true;
    }
    if (row > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(row);
    } else {
      m.recall_undefined = true;
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
      m.f1_undefined = true;
    }
    r.per_class.push_back(m);
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  const double n = static_cast<double>(cm.classes);
  for (const auto& m : r.per_class) {
    r.macro_f1 += m.f1 / n;
    r.macro_precision += m.precision / n;
    r.macro_recall += m.recall / n;
    r.weighted_f1 += m.f1 * static_cast<double>(m.support) / static_cast<double>(total);
  }
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& m : r.per_class) {
    per.push_back({{"precision", m.precision},
                   {"recall", m.recall},
                   {"f1", m.f1},
                   {"support", m.support},
                   {"precision_undefined", m.precision_undefined},
                   {"recall_undefined", m.recall_undefined},
                   {"f1_undefined", m.f1_undefined}});
  }
  nlohmann::json cm = nlohmann::json::array();
  for (int t = 0; t < r.cm.classes; ++t) {
    std::vector<std::int64_t> row(r.cm.counts.begin() + t * r.cm.classes,
                                  r.cm.counts.begin() + (t + 1) * r.cm.classes);
    cm.push_back(row);
  }
  return {{"accuracy", r.accuracy},
          {"macro_f1", r.macro_f1},
          {"weighted_f1", r.weighted_f1},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"per_class", per},
          {"confusion", cm},
          {"tags",
           {{"variant", r.tags.variant},
            {"label_fraction", r.tags.label_fraction},
            {"ratio", r.tags.ratio},
            {"fold", r.tags.fold},
            {"sigma", r.tags.sigma}}}};
}

std::vector<MetricsReport> noise_sweep(const Model& model, const EvalSet& set, const std::vector<double>& sigmas,
                                       std::uint64_t seed, double noise_mean) {
  if (sigmas.empty()) throw ConfigError("noise sweep needs at least one sigma");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] >= 0.0)) throw ConfigError("noise sigmas must be >= 0");
    if (i > 0 && sigmas[i] < sigmas[i - 1]) throw ConfigError("noise sigmas must be non-decreasing");
  }
  std::vector<MetricsReport> reports;
  for (double sigma : sigmas) {
    const NoiseSpec spec{sigma == 0.0 ? 0.0 : noise_mean, sigma};
    const std::uint64_t s = derive_seed(seed, {kEvalNoiseStream, std::bit_cast<std::uint64_t>(sigma)});
    std::vector<int> pred;
    pred.reserve(set.images.size());
    for (std::size_t j = 0; j < set.images.size(); ++j) {
      Rng rng = make_rng(s, {j});
      pred.push_back(model.predict(add_gaussian_noise(*set.images[j], spec, rng)));
    }
    MetricsReport r = metrics(confusion_from_predictions(set.labels, pred, model.head().classes()));
    r.tags.sigma = sigma;
    reports.push_back(std::move(r));
  }
  return reports;
}

double reconstruction_error(const Model& model, const std::vector<const ImageTensor*>& images) {
  if (images.empty()) throw ContractError("reconstruction error of an empty set");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto* x : images) {
    const EncoderPass enc = model.encoder().encode(*x);
    const DecoderPass dec = model.decoder().decode(enc.stage4_output(), enc.skips);
    for (std::size_t i = 0; i < x->size(); ++i) {
      const double d = dec.reconstruction.data[i] - x->data[i];
      sum += d * d;
    }
    count += x->size();
  }
  return sum / static_cast<double>(count);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

// ------------------------------------------------------------------ grid

std::string format_row(const GridRow& r) {
  return fmt::format("{},{:.10g},{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{},{}", r.variant, r.fraction, r.ratio,
                     r.fold, r.base_lr, r.sigma, r.accuracy, r.macro_f1, r.weighted_f1, join(r.per_class_f1, ';'), r.manifest_hash);
}

std::vector<GridRow> read_results(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open results table " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) {
    throw SchemaError(csv.string() + ": unexpected header");
  }
  std::vector<GridRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 11) throw SchemaError(fmt::format("{}:{}: expected 11 columns", csv.string(), line_no));
    try {
      GridRow r;
      r.variant = f[0];
      r.fraction = std::stod(f[1]);
      r.ratio = std::stoi(f[2]);
      r.fold = std::stoi(f[3]);
      r.base_lr = std::stod(f[4]);
      r.sigma = std::stod(f[5]);
      r.accuracy = std::stod(f[6]);
      r.macro_f1 = std::stod(f[7]);
      r.weighted_f1 = std::stod(f[8]);
      std::stringstream ps(f[9]);
      while (std::getline(ps, field, ';')) r.per_class_f1.push_back(std::stod(field));
      r.manifest_hash = f[10];
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw SchemaError(fmt::format("{}:{}: malformed number", csv.string(), line_no));
    }
  }
  return rows;
}

GridResult run_ablation_grid(const Dataset& dataset, const GridSpec& grid, const GridContext& ctx) {
  ctx.train.validate();
  if (grid.cell_count() == 0) throw ConfigError("ablation grid is empty");
  for (int f : grid.folds) {
    if (f < 0 || f >= ctx.k) throw ConfigError(fmt::format("fold {} outside [0, {})", f, ctx.k));
  }
  std::filesystem::create_directories(ctx.out_dir);
  GridResult result;
  result.results_csv = ctx.out_dir / "results.csv";
  const auto failures_csv = ctx.out_dir / "failures.csv";

  std::set<std::string> done;
  if (ctx.resume && std::filesystem::exists(result.results_csv)) {
    result.rows = read_results(result.results_csv);
    for (const auto& r : result.rows) done.insert(r.manifest_hash);
  } else {
    plots::write_text(result.results_csv, std::string(kResultsHeader) + "\n");
    plots::write_text(failures_csv, "manifest_hash,variant,fraction,ratio,fold,base_lr,error\n");
  }
  if (!std::filesystem::exists(failures_csv)) {
    plots::write_text(failures_csv, "manifest_hash,variant,fraction,ratio,fold,base_lr,error\n");
  }

  const auto folds = stratified_kfold(dataset, ctx.k, ctx.split_seed);
  const std::vector<double> lrs = grid.base_lrs.empty() ? std::vector<double>{ctx.train.base_lr} : grid.base_lrs;
  for (Variant variant : grid.variants) {
    for (double fraction : grid.fractions) {
      for (int ratio : grid.ratios) {
        for (int fold : grid.folds) {
          for (double lr : lrs) {
            TrainConfig cfg = ctx.train;
            cfg.variant = variant;
            cfg.base_lr = lr;
            GridFailure fail{"", to_string(variant), fraction, ratio, fold, lr, ""};
            try {
              SplitPlan plan = apply_label_scarcity(dataset, folds[fold], fraction, ctx.split_seed);
              plan.ratio = ratio;
              if (terms_of(variant).uses_unlabeled) {
                plan = build_unlabeled_pool(plan, ctx.augment_rotations, ctx.split_seed, ctx.rotated_copies);
              }
              nlohmann::json manifest = make_manifest(cfg, ctx.model, plan);
              manifest["eval"] = {{"sigmas", grid.sigmas}, {"seed", ctx.eval_seed}};
              manifest["unlabeled_rotations"] = {{"enabled", ctx.augment_rotations}, {"copies", ctx.rotated_copies}};
              const std::string hash = fnv1a_hex(manifest.dump());
              fail.manifest_hash = hash;
              if (done.count(hash)) {
                ++result.cells_skipped;
                continue;
              }
              spdlog::info("cell {} fraction {} ratio 1:{} fold {} [{}]", to_string(variant), fraction, ratio, fold,
                           hash);
              FitOptions opts;
              if (ctx.keep_cell_artifacts) opts.out_dir = ctx.out_dir / "cells" / hash;
              const TrainState state = fit(dataset, plan, cfg, ctx.model, opts);
              const EvalSet test = make_eval_set(dataset, plan.test);
              const auto reports = noise_sweep(state.model, test, grid.sigmas, ctx.eval_seed);
              std::string block;
              for (const auto& rep : reports) {
                GridRow row{to_string(variant), fraction, ratio, fold, lr, rep.tags.sigma, rep.accuracy,
                            rep.macro_f1, rep.weighted_f1, {}, hash};
                for (const auto& m : rep.per_class) row.per_class_f1.push_back(m.f1);
                block += format_row(row) + "\n";
                result.rows.push_back(std::move(row));
              }
              append_atomic(result.results_csv, block);
              done.insert(hash);
              ++result.cells_run;
            } catch (const std::exception& e) {
              fail.error = e.what();
              std::replace(fail.error.begin(), fail.error.end(), ',', ';');
              std::replace(fail.error.begin(), fail.error.end(), '\n', ' ');
              spdlog::error("cell {} fraction {} ratio 1:{} fold {} failed: {}", fail.variant, fraction, ratio, fold,
                            fail.error);
              append_atomic(failures_csv, fmt::format("{},{},{:.10g},{},{},{:.10g},{}\n", fail.manifest_hash,
                                                      fail.variant, fraction, ratio, fold, lr, fail.error));
              result.failures.push_back(std::move(fail));
            }
          }
        }
      }
    }
  }
  // Plots show the first learning rate only; the summary keeps them all.
  std::vector<GridRow> plotted;
  for (const auto& r : result.rows)
    if (r.base_lr == lrs.front()) plotted.push_back(r);
  write_grid_plots(plotted, ctx.out_dir / "plots");

  // Fold means per condition.
  std::map<std::tuple<std::string, double, int, double, double>, std::vector<const GridRow*>> groups;
  for (const auto& r : result.rows) groups[{r.variant, r.fraction, r.ratio, r.base_lr, r.sigma}].push_back(&r);
  std::string summary = "variant,fraction,ratio,base_lr,sigma,folds,mean_accuracy,mean_macro_f1,mean_weighted_f1\n";
  for (const auto& [key, rows] : groups) {
    double acc = 0, mf1 = 0, wf1 = 0;
    for (const auto* r : rows) acc += r->accuracy, mf1 += r->macro_f1, wf1 += r->weighted_f1;
    const double n = static_cast<double>(rows.size());
    summary += fmt::format("{},{:.10g},{},{:.10g},{:.10g},{},{:.10g},{:.10g},{:.10g}\n", std::get<0>(key),
                           std::get<1>(key), std::get<2>(key), std::get<3>(key), std::get<4>(key), rows.size(), acc / n,
                           mf1 / n, wf1 / n);
  }
  plots::write_text(ctx.out_dir / "summary.csv", summary);
  return result;
}

std::vector<std::filesystem::path> write_grid_plots(const std::vector<GridRow>& rows,
                                                    const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (rows.empty()) return files;
  double clean_sigma = rows.front().sigma;
  std::set<double> fractions;
  std::vector<std::string> variants;
  for (const auto& r : rows) {
    clean_sigma = std::min(clean_sigma, r.sigma);
    fractions.insert(r.fraction);
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
  }
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };

  // metric vs label fraction, one line per variant and ratio
  for (const char* metric : {"accuracy", "macro_f1"}) {
    std::map<std::pair<std::string, int>, std::map<double, std::vector<double>>> acc;
    for (const auto& r : rows) {
      if (r.sigma != clean_sigma) continue;
      acc[{r.variant, r.ratio}][r.fraction].push_back(std::string(metric) == "accuracy" ? r.accuracy : r.macro_f1);
    }
    std::vector<plots::Series> series;
    for (const auto& [key, by_fraction] : acc) {
      plots::Series s{fmt::format("{} 1:{}", key.first, key.second), {}};
      for (const auto& [f, vals] : by_fraction) s.points.emplace_back(f, mean_of(vals));
      series.push_back(std::move(s));
    }
    const auto path = dir / fmt::format("{}_vs_fraction.svg", metric);
    plots::write_text(path, plots::line_chart({fmt::format("Test {} vs label fraction (fold mean)", metric),
                                               "labeled fraction of the dataset", metric, std::nullopt},
                                              series));
    files.push_back(path);
  }

  // accuracy vs sigma, one file per fraction
  for (double fraction : fractions) {
    std::map<std::string, std::map<double, std::vector<double>>> acc;
    for (const auto& r : rows) {
      if (r.fraction == fraction) acc[r.variant][r.sigma].push_back(r.accuracy);
    }
    std::vector<plots::Series> series;
    for (const auto& [variant, by_sigma] : acc) {
      plots::Series s{variant, {}};
      for (const auto& [sigma, vals] : by_sigma) s.points.emplace_back(sigma, mean_of(vals));
      series.push_back(std::move(s));
    }
    const auto path = dir / fmt::format("accuracy_vs_sigma_f{:.3f}.svg", fraction);
    plots::write_text(path, plots::line_chart({fmt::format("Noisy test accuracy, label fraction {:.2f}", fraction),
                                               "noise sigma", "accuracy", std::nullopt},
                                              series));
    files.push_back(path);
  }

  // ablation bars: groups = fractions, bars = variants
  std::vector<plots::BarGroup> groups;
  for (double fraction : fractions) {
    plots::BarGroup g{fmt::format("{:.2f}", fraction), {}};
    for (const auto& v : variants) {
      std::vector<double> vals;
      for (const auto& r : rows) {
        if (r.variant == v && r.fraction == fraction && r.sigma == clean_sigma) vals.push_back(r.accuracy);
      }
      g.values.push_back(mean_of(vals));
    }
    groups.push_back(std::move(g));
  }
  const auto path = dir / "ablation_accuracy.svg";
  plots::write_text(path, plots::bar_chart({"Clean test accuracy by variant", "labeled fraction", "accuracy",
                                            std::pair<double, double>{0.0, 1.0}},
                                           variants, groups));
  files.push_back(path);
  return files;
}

}  // namespace jointssl
