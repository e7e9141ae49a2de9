#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "jointssl/trainer.hpp"

namespace testing {

struct GroupCheck {
  std::string name;
  double max_rel_error = 0.0;
  int probes = 0;
};

/// Compares the analytic gradient of the weighted step loss with central
/// differences on `per_group` entries of every parameter tensor: the entry
/// with the largest analytic magnitude plus random ones. A 1e-6 step keeps
/// LeakyReLU kinks out of the difference interval; at that step float64
/// round-off in the loss is about 1e-10, so relative errors are taken against
/// max(|analytic|, |numeric|, 1e-5).
inline std::vector<GroupCheck> check_model_gradients(jointssl::Model& model, const jointssl::StepBatch& batch,
                                                     const jointssl::TrainConfig& cfg, int per_group,
                                                     std::uint64_t seed, double step = 1e-6,
                                                     double floor = 1e-5) {
  jointssl::accumulate_gradients(model, batch, cfg);
  std::vector<std::vector<double>> analytic;
  for (auto* p : model.params()) analytic.push_back(p->grad);

  std::mt19937_64 rng(seed);
  std::vector<GroupCheck> out;
  for (std::size_t g = 0; g < model.params().size(); ++g) {
    auto* p = model.params()[g];
    const auto& a = analytic[g];
    std::vector<std::size_t> probes;
    probes.push_back(static_cast<std::size_t>(
        std::max_element(a.begin(), a.end(), [](double x, double y) { return std::abs(x) < std::abs(y); }) -
        a.begin()));
    std::uniform_int_distribution<std::size_t> pick(0, p->size() - 1);
    while (static_cast<int>(probes.size()) < std::min<int>(per_group, static_cast<int>(p->size()))) {
      probes.push_back(pick(rng));
    }
    GroupCheck gc{p->name, 0.0, 0};
    for (std::size_t i : probes) {
      const double keep = p->value[i];
      p->value[i] = keep + step;
      const double up = jointssl::accumulate_gradients(model, batch, cfg).total;
      p->value[i] = keep - step;
      const double down = jointssl::accumulate_gradients(model, batch, cfg).total;
      p->value[i] = keep;
      const double fd = (up - down) / (2 * step);
      const double err = std::abs(a[i] - fd) / std::max({std::abs(a[i]), std::abs(fd), floor});
      gc.max_rel_error = std::max(gc.max_rel_error, err);
      ++gc.probes;
    }
    out.push_back(gc);
  }
  return out;
}

}  // namespace testing
