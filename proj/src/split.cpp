#include "jointssl/split.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <spdlog/spdlog.h>

#include "jointssl/errors.hpp"
#include "jointssl/random.hpp"

namespace jointssl {

namespace {

using Matrix = std::vector<std::vector<int>>;

// Stream tags keep the split rngs apart from each other.
constexpr std::uint64_t kDealStream = 11;
constexpr std::uint64_t kScarcityStream = 12;
constexpr std::uint64_t kRotationStream = 13;
constexpr std::uint64_t kSelectionStream = 14;

struct Score {
  std::int64_t violation = 0;  // summed excess over the one-sample tolerance
  std::int64_t spread = 0;     // summed squared deviation, tie breaker

  bool operator<(const Score& o) const {
    return violation != o.violation ? violation < o.violation : spread < o.spread;
  }
};

// Deviations are kept scaled by N so everything stays integral:
// dev = count * N - n_c * |P|, tolerance |dev| <= N.
Score score(const Matrix& counts, const std::vector<int>& class_counts, const std::vector<int>& fold_sizes,
            std::int64_t n) {
  const int k = static_cast<int>(fold_sizes.size());
  Score s;
  auto add = [&](std::int64_t dev) {
    const std::int64_t a = std::llabs(dev);
    if (a > n) s.violation += a - n;
    s.spread += a * a;
  };
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const std::int64_t nc = class_counts[c];
    for (int f = 0; f < k; ++f) {
      const int g = (f + 1) % k;
      add(static_cast<std::int64_t>(counts[c][f]) * n - nc * fold_sizes[f]);
      add(static_cast<std::int64_t>(counts[c][f] + counts[c][g]) * n - nc * (fold_sizes[f] + fold_sizes[g]));
    }
  }
  return s;
}

std::vector<std::string> ids_of(const Dataset& ds, const std::vector<std::size_t>& indices) {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(ds.samples[i].id);
  return out;
}

}  // namespace

std::vector<std::string> SplitPlan::train_partition() const {
  std::vector<std::string> out = labeled_train;
  out.insert(out.end(), unlabeled_train.begin(), unlabeled_train.end());
  return out;
}

std::vector<std::vector<int>> stratified_fold_counts(const std::vector<int>& class_counts, int k) {
  if (k < 2) throw ConfigError("k must be >= 2");
  const int num_classes = static_cast<int>(class_counts.size());
  for (int c = 0; c < num_classes; ++c) {
    if (class_counts[c] < k) {
      throw StratificationError("class " + std::to_string(c) + " has " + std::to_string(class_counts[c]) +
                                " samples, fewer than k=" + std::to_string(k));
    }
  }
  const std::int64_t n = std::accumulate(class_counts.begin(), class_counts.end(), std::int64_t{0});
  std::vector<int> fold_sizes(k, static_cast<int>(n / k));
  for (int f = 0; f < n % k; ++f) ++fold_sizes[f];

  // Cyclic deal over the class-major ordering: fold sizes come out exact and
  // each class is split into near-equal parts.
  Matrix counts(num_classes, std::vector<int>(k, 0));
  std::int64_t pos = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < class_counts[c]; ++i, ++pos) ++counts[c][pos % k];
  }

  // Local search over count-preserving swaps until every single fold and
  // every adjacent pair is within tolerance.
  Score current = score(counts, class_counts, fold_sizes, n);
  while (current.violation > 0) {
    Score best = current;
    int b1 = -1, b2 = -1, bf1 = -1, bf2 = -1;
    for (int c1 = 0; c1 < num_classes; ++c1) {
      for (int c2 = 0; c2 < num_classes; ++c2) {
        if (c1 == c2) continue;
        for (int f1 = 0; f1 < k; ++f1) {
          for (int f2 = 0; f2 < k; ++f2) {
            if (f1 == f2 || counts[c1][f2] == 0 || counts[c2][f1] == 0) continue;
            ++counts[c1][f1], --counts[c1][f2], --counts[c2][f1], ++counts[c2][f2];
            const Score s = score(counts, class_counts, fold_sizes, n);
            --counts[c1][f1], ++counts[c1][f2], ++counts[c2][f1], --counts[c2][f2];
            if (s < best) best = s, b1 = c1, b2 = c2, bf1 = f1, bf2 = f2;
          }
        }
      }
    }
    if (b1 < 0) {
      throw StratificationError("no fold assignment keeps every class within one sample of its share");
    }
    ++counts[b1][bf1], --counts[b1][bf2], --counts[b2][bf1], ++counts[b2][bf2];
    current = best;
  }
  return counts;
}

std::vector<int> stratified_fold_assignment(const std::vector<int>& labels, int num_classes, int k,
                                            std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw SchemaError("label " + std::to_string(labels[i]) + " outside the label space");
    }
    members[labels[i]].push_back(i);
  }
  std::vector<int> class_counts(num_classes);
  for (int c = 0; c < num_classes; ++c) class_counts[c] = static_cast<int>(members[c].size());
  const auto counts = stratified_fold_counts(class_counts, k);

  std::vector<int> fold(labels.size(), -1);
  for (int c = 0; c < num_classes; ++c) {
    Rng rng = make_rng(seed, {kDealStream, static_cast<std::uint64_t>(c)});
    std::shuffle(members[c].begin(), members[c].end(), rng);
    std::size_t next = 0;
    for (int f = 0; f < k; ++f) {
      for (int j = 0; j < counts[c][f]; ++j) fold[members[c][next++]] = f;
    }
  }
  return fold;
}

std::vector<SplitPlan> stratified_kfold(const Dataset& dataset, int k, std::uint64_t seed) {
  if (k < 3) throw ConfigError("k must be >= 3 so that train, validation and test are all non-empty");
  const auto fold = stratified_fold_assignment(dataset.labels(), dataset.num_classes(), k, seed);
  std::vector<SplitPlan> plans(k);
  for (int i = 0; i < k; ++i) {
    SplitPlan& p = plans[i];
    p.fold_index = i;
    p.k = k;
    p.dataset_size = dataset.samples.size();
    p.seed = seed;
    std::vector<std::size_t> train, val, test;
    for (std::size_t s = 0; s < fold.size(); ++s) {
      if (fold[s] == i) {
        test.push_back(s);
      } else if (fold[s] == (i + 1) % k) {
        val.push_back(s);
      } else {
        train.push_back(s);
      }
    }
    p.labeled_train = ids_of(dataset, train);
    p.validation = ids_of(dataset, val);
    p.test = ids_of(dataset, test);
    p.label_fraction = static_cast<double>(train.size()) / static_cast<double>(dataset.samples.size());
  }
  return plans;
}

std::size_t labeled_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

SplitPlan apply_label_scarcity(const Dataset& dataset, const SplitPlan& plan, double fraction,
                               std::uint64_t seed) {
  if (dataset.samples.size() != plan.dataset_size) {
    throw ContractError("split plan was built for a dataset of " + std::to_string(plan.dataset_size) +
                        " samples, got " + std::to_string(dataset.samples.size()));
  }
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("label fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  const auto train_ids = plan.train_partition();
  const std::size_t target = labeled_count(fraction, plan.dataset_size);
  if (target > train_ids.size()) {
    throw ConfigError("label fraction " + std::to_string(fraction) + " needs " + std::to_string(target) +
                      " labeled samples but the train partition holds " + std::to_string(train_ids.size()));
  }
  if (target == 0) throw ConfigError("label fraction " + std::to_string(fraction) + " keeps no labels");

  const auto index = dataset.index();
  const int num_classes = dataset.num_classes();
  std::vector<std::vector<std::size_t>> members(num_classes);  // positions in train_ids
  for (std::size_t i = 0; i < train_ids.size(); ++i) {
    const auto& s = dataset.samples.at(index.at(train_ids[i]));
    if (!s.label) throw ContractError("train sample " + s.id + " has no label in the source dataset");
    members[*s.label].push_back(i);
  }

  // Largest-remainder apportionment of `target` over the class counts.
  const std::size_t total = train_ids.size();
  std::vector<std::size_t> quota(num_classes);
  std::vector<std::pair<std::size_t, int>> remainders;
  std::size_t assigned = 0;
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t num = target * members[c].size();
    quota[c] = num / total;
    assigned += quota[c];
    remainders.emplace_back(num % total, c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < target; ++i, ++assigned) ++quota[remainders[i].second];

  std::vector<bool> keep(total, false);
  for (int c = 0; c < num_classes; ++c) {
    Rng rng = make_rng(seed, {kScarcityStream, static_cast<std::uint64_t>(plan.fold_index),
                              static_cast<std::uint64_t>(c)});
    auto pick = members[c];
    std::shuffle(pick.begin(), pick.end(), rng);
    for (std::size_t j = 0; j < quota[c]; ++j) keep[pick[j]] = true;
  }

  // Keep dataset order inside both lists.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return index.at(train_ids[a]) < index.at(train_ids[b]); });

  SplitPlan out = plan;
  out.labeled_train.clear();
  out.unlabeled_train.clear();
  out.selected_unlabeled.clear();
  out.achieved_ratio = 0.0;
  for (auto i : order) (keep[i] ? out.labeled_train : out.unlabeled_train).push_back(train_ids[i]);
  out.label_fraction = fraction;
  return out;
}

SplitPlan build_unlabeled_pool(const SplitPlan& plan, bool augment_rotations, std::uint64_t seed,
                               int rotated_copies) {
  if (plan.ratio < 1) throw ConfigError("labeled:unlabeled ratio must be >= 1");
  if (plan.unlabeled_train.empty()) throw ConfigError("de-labeled pool is empty, nothing to select");
  if (augment_rotations && rotated_copies < 0) throw ConfigError("rotated copy count must be >= 0");

  std::vector<UnlabeledItem> pool;
  for (const auto& id : plan.unlabeled_train) pool.push_back({id, 0.0});
  if (augment_rotations) {
    Rng rng = make_rng(seed, {kRotationStream, static_cast<std::uint64_t>(plan.fold_index)});
    std::uniform_real_distribution<double> angle(-180.0, 180.0);
    for (const auto& id : plan.unlabeled_train) {
      for (int r = 0; r < rotated_copies; ++r) {
        double a = angle(rng);
        if (a == 0.0) a = 180.0;  // 0 is reserved for the original
        pool.push_back({id, a});
      }
    }
  }
  Rng rng = make_rng(seed, {kSelectionStream, static_cast<std::uint64_t>(plan.fold_index)});
  std::shuffle(pool.begin(), pool.end(), rng);

  const std::size_t wanted = static_cast<std::size_t>(plan.ratio) * plan.labeled_train.size();
  if (pool.size() < wanted) {
    spdlog::warn("fold {}: unlabeled pool holds {} items, ratio 1:{} asks for {}; using all", plan.fold_index,
                 pool.size(), plan.ratio, wanted);
  } else {
    pool.resize(wanted);
  }
  SplitPlan out = plan;
  out.selected_unlabeled = std::move(pool);
  out.achieved_ratio = plan.labeled_train.empty()
                           ? 0.0
                           : static_cast<double>(out.selected_unlabeled.size()) /
                                 static_cast<double>(plan.labeled_train.size());
  return out;
}

nlohmann::json to_json(const SplitPlan& p) {
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& u : p.selected_unlabeled) sel.push_back({{"id", u.source_id}, {"rotation_deg", u.rotation_deg}});
  return {{"fold_index", p.fold_index},
          {"k", p.k},
          {"dataset_size", p.dataset_size},
          {"seed", p.seed},
          {"label_fraction", p.label_fraction},
          {"ratio", p.ratio},
          {"achieved_ratio", p.achieved_ratio},
          {"labeled_train", p.labeled_train},
          {"unlabeled_train", p.unlabeled_train},
          {"validation", p.validation},
          {"test", p.test},
          {"selected_unlabeled", sel}};
}

SplitPlan split_plan_from_json(const nlohmann::json& j) {
  try {
    SplitPlan p;
    p.fold_index = j.at("fold_index").get<int>();
    p.k = j.at("k").get<int>();
    p.dataset_size = j.at("dataset_size").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.label_fraction = j.at("label_fraction").get<double>();
    p.ratio = j.at("ratio").get<int>();
    p.achieved_ratio = j.at("achieved_ratio").get<double>();
    p.labeled_train = j.at("labeled_train").get<std::vector<std::string>>();
    p.unlabeled_train = j.at("unlabeled_train").get<std::vector<std::string>>();
    p.validation = j.at("validation").get<std::vector<std::string>>();
    p.test = j.at("test").get<std::vector<std::string>>();
    for (const auto& u : j.at("selected_unlabeled")) {
      p.selected_unlabeled.push_back({u.at("id").get<std::string>(), u.at("rotation_deg").get<double>()});
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed split plan: ") + e.what());
  }
}

}  // namespace jointssl
