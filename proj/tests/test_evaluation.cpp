#include <doctest.h>

#include <random>

#include "jointssl/errors.hpp"
#include "jointssl/evaluation.hpp"
#include "support.hpp"

using namespace jointssl;

namespace {

ModelConfig small_model(int classes) {
  ModelConfig cfg;
  cfg.encoder.stage_depths = {1, 1, 1, 1};
  cfg.encoder.stage_widths = {4, 6, 8, 10};
  cfg.encoder.dw_kernel = 3;
  cfg.encoder.expansion = 2;
  cfg.num_classes = classes;
  return cfg;
}

}  // namespace

TEST_CASE("binary tallies give the textbook precision and recall") {
  // Class 1 as positive: TP = 6, FP = 2, FN = 4, TN = 8.
  ConfusionMatrix cm(2);
  cm.at(1, 1) = 6;
  cm.at(0, 1) = 2;
  cm.at(1, 0) = 4;
  cm.at(0, 0) = 8;
  const auto r = metrics(cm);
  CHECK(r.per_class[1].precision == doctest::Approx(0.75));
  CHECK(r.per_class[1].recall == doctest::Approx(0.6));
  CHECK(r.per_class[1].f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
  CHECK(r.per_class[1].support == 10);
  CHECK(r.accuracy == doctest::Approx(0.7));
}

TEST_CASE("metrics agree with per-sample tallies") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 5);
    const int n = 30 + static_cast<int>(rng() % 50);
    std::vector<int> truth(n), pred(n);
    for (int i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % c);
      pred[i] = static_cast<int>(rng() % c);
    }
    const auto r = metrics(confusion_from_predictions(truth, pred, c));
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += truth[i] == pred[i];
    CHECK(r.accuracy == static_cast<double>(correct) / n);
    double macro = 0.0;
    for (int k = 0; k < c; ++k) {
      int tp = 0, fp = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        tp += truth[i] == k && pred[i] == k;
        fp += truth[i] != k && pred[i] == k;
        fn += truth[i] == k && pred[i] != k;
      }
      const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
      const double rc = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
      const double f1 = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
      CHECK(r.per_class[k].precision == doctest::Approx(p).epsilon(1e-14));
      CHECK(r.per_class[k].recall == doctest::Approx(rc).epsilon(1e-14));
      macro += f1 / c;
    }
    CHECK(r.macro_f1 == doctest::Approx(macro).epsilon(1e-12));
  }
}

TEST_CASE("zero denominators are reported as 0 and flagged") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 4;
  cm.at(1, 0) = 2;  // class 1 never predicted, class 2 absent
  const auto r = metrics(cm);
  CHECK(r.per_class[1].precision == 0.0);
  CHECK(r.per_class[1].precision_undefined);
  CHECK_FALSE(r.per_class[1].recall_undefined);
  CHECK(r.per_class[1].f1_undefined);
  CHECK(r.per_class[2].recall_undefined);
  CHECK(r.per_class[2].support == 0);
  CHECK_FALSE(r.per_class[0].precision_undefined);
  CHECK(r.weighted_f1 == doctest::Approx(r.per_class[0].f1 * 4.0 / 6.0));
  CHECK_THROWS_AS(metrics(ConfusionMatrix(3)), ContractError);
}

TEST_CASE("noise sweep: sigma zero is the clean evaluation and sigmas are validated") {
  const Dataset ds = generate_synthetic(4, 3, 32, 2);
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) ids.push_back(s.id);
  const EvalSet set = make_eval_set(ds, ids);
  Model model(small_model(3));
  model.init(5);
  const auto reports = noise_sweep(model, set, {0.0, 0.1, 0.5}, 9);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].cm == confusion(model, set));
  CHECK(reports[2].tags.sigma == 0.5);
  // A sigma's noise does not depend on its neighbours in the list.
  CHECK(noise_sweep(model, set, {0.5}, 9)[0].cm == reports[2].cm);
  CHECK(noise_sweep(model, set, {0.0, 0.1, 0.5}, 9)[1].cm == reports[1].cm);

  CHECK_THROWS_AS(noise_sweep(model, set, {}, 9), ConfigError);
  CHECK_THROWS_AS(noise_sweep(model, set, {-0.1}, 9), ConfigError);
  CHECK_THROWS_AS(noise_sweep(model, set, {0.1, 0.05}, 9), ConfigError);
  CHECK_THROWS_AS(make_eval_set(ds, {"no-such-id"}), ContractError);
}

TEST_CASE("manifest hashes are stable hex digests") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("ablation grid records failures and resumes") {
  const Dataset ds = generate_synthetic(5, 3, 32, 3);
  GridSpec grid;
  grid.variants = {Variant::ssl, Variant::supervised};
  grid.fractions = {0.2, 0.9};  // 0.9 exceeds the train partition
  grid.ratios = {1};
  grid.folds = {0};
  grid.sigmas = {0.0, 0.1};
  GridContext ctx;
  ctx.split_seed = 1;
  ctx.train.epochs = 1;
  ctx.train.batch_size_labeled = 2;
  ctx.train.seed = 2;
  ctx.model = small_model(3);
  ctx.eval_seed = 4;
  ctx.out_dir = testing::scratch_dir("grid");
  ctx.augment_rotations = false;

  const auto first = run_ablation_grid(ds, grid, ctx);
  CHECK(first.cells_run == 2);
  CHECK(first.failures.size() == 2);
  CHECK(first.rows.size() == 4);
  CHECK(std::filesystem::exists(ctx.out_dir / "summary.csv"));
  CHECK(std::filesystem::exists(ctx.out_dir / "failures.csv"));
  const auto table = read_results(first.results_csv);
  REQUIRE(table.size() == 4);
  CHECK(table[0].manifest_hash == first.rows[0].manifest_hash);
  CHECK(table[0].accuracy == doctest::Approx(first.rows[0].accuracy).epsilon(1e-9));

  ctx.resume = true;
  const auto second = run_ablation_grid(ds, grid, ctx);
  CHECK(second.cells_run == 0);
  CHECK(second.cells_skipped == 2);
  CHECK(read_results(second.results_csv).size() == 4);

  CHECK(table[0].base_lr == ctx.train.base_lr);

  // A learning-rate axis adds cells; resuming reruns only the new rate.
  grid.base_lrs = {ctx.train.base_lr, 0.009};
  CHECK(grid.cell_count() == 8);
  const auto third = run_ablation_grid(ds, grid, ctx);
  CHECK(third.cells_run == 2);
  CHECK(third.cells_skipped == 2);
  int at_new_rate = 0;
  for (const auto& r : read_results(third.results_csv)) at_new_rate += r.base_lr == 0.009;
  CHECK(at_new_rate == 4);

  grid.folds = {7};
  CHECK_THROWS_AS(run_ablation_grid(ds, grid, ctx), ConfigError);
}
