#include <doctest.h>

#include <algorithm>
#include <set>

#include "jointssl/errors.hpp"
#include "jointssl/split.hpp"

using namespace jointssl;

namespace {

// Labels only; images are irrelevant to splitting.
Dataset label_only(const std::vector<int>& counts) {
  Dataset ds;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    ds.label_space.classes.push_back("c" + std::to_string(c));
    for (int i = 0; i < counts[c]; ++i) {
      ds.samples.push_back({"s" + std::to_string(c) + "_" + std::to_string(i), Tensor(), static_cast<int>(c)});
    }
  }
  return ds;
}

std::vector<int> class_tally(const Dataset& ds, const std::vector<std::string>& ids) {
  const auto index = ds.index();
  std::vector<int> t(ds.num_classes(), 0);
  for (const auto& id : ids) ++t[*ds.samples[index.at(id)].label];
  return t;
}

}  // namespace

TEST_CASE("two balanced classes split evenly") {
  const Dataset ds = label_only({50, 50});
  const auto plans = stratified_kfold(ds, 5, 3);
  REQUIRE(plans.size() == 5);
  for (const auto& p : plans) {
    CHECK(class_tally(ds, p.test) == std::vector<int>{10, 10});
    CHECK(class_tally(ds, p.validation) == std::vector<int>{10, 10});
    CHECK(p.labeled_train.size() == 60);
    CHECK(p.unlabeled_train.empty());
    CHECK(p.label_fraction == doctest::Approx(0.6));
  }
}

TEST_CASE("plans partition the dataset and rotate roles") {
  const Dataset ds = label_only({23, 17, 31, 9});
  const auto plans = stratified_kfold(ds, 5, 8);
  std::multiset<std::string> all_tests;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    std::set<std::string> seen;
    for (const auto* part : {&p.labeled_train, &p.unlabeled_train, &p.validation, &p.test})
      for (const auto& id : *part) CHECK(seen.insert(id).second);
    CHECK(seen.size() == ds.samples.size());
    CHECK(p.validation == plans[(i + 1) % plans.size()].test);
    all_tests.insert(p.test.begin(), p.test.end());
  }
  CHECK(all_tests.size() == ds.samples.size());
  CHECK(std::set<std::string>(all_tests.begin(), all_tests.end()).size() == ds.samples.size());
}

TEST_CASE("fold sizes differ by at most one and classes stay within one of their share") {
  const std::vector<int> counts{7, 13, 29, 5, 11};
  const int n = 65;
  const auto fc = stratified_fold_counts(counts, 5);
  for (int f = 0; f < 5; ++f) {
    int size = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      size += fc[c][f];
      CHECK(std::abs(fc[c][f] - counts[c] / 5.0) <= 1.0);
    }
    CHECK(size == n / 5 + (f < n % 5 ? 1 : 0));
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    int total = 0;
    for (int f = 0; f < 5; ++f) total += fc[c][f];
    CHECK(total == counts[c]);
  }
}

TEST_CASE("split errors") {
  CHECK_THROWS_AS(stratified_kfold(label_only({10, 4}), 5, 1), StratificationError);
  CHECK_THROWS_AS(stratified_kfold(label_only({10, 10}), 2, 1), ConfigError);
}

TEST_CASE("determinism and seed sensitivity") {
  const Dataset ds = label_only({20, 20, 20});
  CHECK(stratified_kfold(ds, 5, 4) == stratified_kfold(ds, 5, 4));
  CHECK_FALSE(stratified_kfold(ds, 5, 4)[0].test == stratified_kfold(ds, 5, 5)[0].test);
}

TEST_CASE("labeled count rounding") {
  CHECK(labeled_count(0.05, 1000) == 50);
  CHECK(labeled_count(0.10, 17509) == 1751);  // 1750.9
  CHECK(labeled_count(0.20, 17509) == 3502);  // 3501.8
  CHECK(labeled_count(0.05, 17509) == 875);   // 875.45
  CHECK(labeled_count(0.15, 17509) == 2626);  // 2626.35
}

TEST_CASE("DeepWeeds-sized folds") {
  const auto fc = stratified_fold_counts({1125, 1064, 1031, 1009, 1062, 1016, 1022, 1074, 9106}, 5);
  std::vector<int> sizes(5, 0);
  for (const auto& row : fc)
    for (int f = 0; f < 5; ++f) sizes[f] += row[f];
  CHECK(sizes == std::vector<int>{3502, 3502, 3502, 3502, 3501});
}

TEST_CASE("label scarcity keeps a stratified labeled subset") {
  const Dataset ds = label_only({100, 100, 100, 100, 100, 100, 100, 100, 200});
  const auto plan = stratified_kfold(ds, 5, 2)[0];
  const auto scarce = apply_label_scarcity(ds, plan, 0.05, 2);
  CHECK(scarce.labeled_train.size() == 50);
  CHECK(scarce.unlabeled_train.size() == 550);
  CHECK(scarce.label_fraction == doctest::Approx(0.05));
  CHECK(scarce.test == plan.test);
  CHECK(scarce.validation == plan.validation);
  const auto tally = class_tally(ds, scarce.labeled_train);
  for (int c = 0; c < 8; ++c) CHECK(std::abs(tally[c] - 5) <= 1);
  CHECK(std::abs(tally[8] - 10) <= 1);

  // Labeled subset is drawn from the train partition.
  auto train = plan.train_partition();
  std::sort(train.begin(), train.end());
  for (const auto& id : scarce.labeled_train) CHECK(std::binary_search(train.begin(), train.end(), id));

  const auto full = apply_label_scarcity(ds, plan, 0.60, 2);
  CHECK(full.labeled_train.size() == 600);
  CHECK(full.unlabeled_train.empty());
  CHECK_THROWS_AS(apply_label_scarcity(ds, plan, 0.61, 2), ConfigError);
  CHECK_THROWS_AS(apply_label_scarcity(ds, plan, 0.0, 2), ConfigError);
  CHECK_THROWS_AS(apply_label_scarcity(label_only({5, 5}), plan, 0.1, 2), ContractError);
}

TEST_CASE("unlabeled pool respects the ratio") {
  const Dataset ds = label_only({200, 200, 200, 200, 200});
  auto plan = apply_label_scarcity(ds, stratified_kfold(ds, 5, 1)[0], 0.05, 1);
  REQUIRE(plan.labeled_train.size() == 50);

  plan.ratio = 5;
  auto pool = build_unlabeled_pool(plan, false, 1);
  CHECK(pool.selected_unlabeled.size() == 250);
  CHECK(pool.achieved_ratio == doctest::Approx(5.0));
  std::set<std::string> unl(plan.unlabeled_train.begin(), plan.unlabeled_train.end());
  for (const auto& item : pool.selected_unlabeled) {
    CHECK(unl.count(item.source_id) == 1);
    CHECK(item.rotation_deg == 0.0);
  }

  plan.ratio = 11;
  pool = build_unlabeled_pool(plan, true, 1);
  CHECK(pool.selected_unlabeled.size() == 550);
  int rotated = 0;
  for (const auto& item : pool.selected_unlabeled) {
    rotated += item.rotation_deg != 0.0;
    CHECK((item.rotation_deg >= -180.0 && item.rotation_deg <= 180.0));
  }
  CHECK(rotated > 0);

  // Pool too small: everything is used and the shortfall is recorded.
  plan.ratio = 30;
  pool = build_unlabeled_pool(plan, false, 1);
  CHECK(pool.selected_unlabeled.size() == plan.unlabeled_train.size());
  CHECK(pool.achieved_ratio == doctest::Approx(static_cast<double>(plan.unlabeled_train.size()) / 50.0));

  plan.ratio = 0;
  CHECK_THROWS_AS(build_unlabeled_pool(plan, false, 1), ConfigError);
  plan.ratio = 5;
  plan.unlabeled_train.clear();
  CHECK_THROWS_AS(build_unlabeled_pool(plan, false, 1), ConfigError);
}

TEST_CASE("split plans survive a JSON round trip") {
  const Dataset ds = label_only({30, 30, 30});
  auto plan = apply_label_scarcity(ds, stratified_kfold(ds, 5, 6)[2], 0.1, 6);
  plan = build_unlabeled_pool(plan, true, 6);
  CHECK(split_plan_from_json(to_json(plan)) == plan);
  auto broken = to_json(plan);
  broken.erase("test");
  CHECK_THROWS_AS(split_plan_from_json(broken), SchemaError);
}
