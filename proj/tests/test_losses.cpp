#include <doctest.h>

#include <cmath>

#include "jointssl/errors.hpp"
#include "jointssl/losses.hpp"
#include "support.hpp"

using namespace jointssl;

TEST_CASE("softmax cross-entropy against a direct formula") {
  const std::vector<double> logits{1.0, 2.0, 0.5};
  const auto p = softmax(logits);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(supervised_loss(1, p) == doctest::Approx(-std::log(std::exp(2.0) / z)).epsilon(1e-14));
  const auto g = supervised_loss_grad(1, p);
  CHECK(g[0] == doctest::Approx(p[0]));
  CHECK(g[1] == doctest::Approx(p[1] - 1.0));

  // Large logits stay finite.
  const auto q = softmax(std::vector<double>{1000.0, 0.0});
  CHECK(q[0] == 1.0);
  CHECK(std::isfinite(supervised_loss(1, q)));
  CHECK(supervised_loss(1, q) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK_THROWS_AS(supervised_loss(3, q), ContractError);
}

TEST_CASE("cross-entropy closed forms") {
  const auto uniform = softmax(std::vector<double>(9, 0.3));
  for (int k = 0; k < 9; ++k) CHECK(supervised_loss(k, uniform) == doctest::Approx(std::log(9.0)).epsilon(1e-14));
  CHECK(supervised_loss(0, std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("consistency loss is the mean of the two squared errors") {
  Tensor x(1, 2, 1), xr(1, 2, 1), v(1, 2, 1), vr(1, 2, 1);
  x.data = {1.0, 0.0};
  xr.data = {0.0, 0.0};
  v.data = {0.5, 0.5};
  vr.data = {0.5, -0.5};
  // per element: (1/2)(1/2 + 1/2)
  CHECK(consistency_loss(x, xr, v, vr) == doctest::Approx(0.5));
  CHECK(consistency_loss(x, xr, v, vr, L2Normalization::raw_sum) == doctest::Approx(1.0));
  CHECK(consistency_loss(x, x, v, v) == 0.0);
  CHECK_THROWS_AS(consistency_loss(x, Tensor(2, 1, 1), v, vr), ShapeError);

  // Gradient of one pair w.r.t. the reconstruction.
  const Tensor g = consistency_loss_grad(x, xr);
  CHECK(g.data[0] == doctest::Approx(-0.5));  // (1/2)(2 (xr - x) / n), n = 2
  CHECK(g.data[1] == 0.0);
}

TEST_CASE("similarity loss bounds and gradient") {
  const std::vector<double> u{1.0, 0.0}, v{0.0, 1.0}, w{-2.0, 0.0};
  CHECK(similarity_loss(u, u) == doctest::Approx(0.0));
  CHECK(similarity_loss(u, v) == doctest::Approx(1.0));
  CHECK(similarity_loss(u, w) == doctest::Approx(2.0));
  const std::vector<double> zero{0.0, 0.0};
  CHECK(similarity_loss(u, zero) == doctest::Approx(1.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> a(6), b(6);
  for (auto& x : a) x = n(rng);
  for (auto& x : b) x = n(rng);
  const auto g = similarity_loss_grad(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto ap = a, am = a;
    ap[i] += 1e-6;
    am[i] -= 1e-6;
    CHECK(testing::rel_error(g.du[i], (similarity_loss(ap, b) - similarity_loss(am, b)) / 2e-6) < 1e-6);
    auto bp = b, bm = b;
    bp[i] += 1e-6;
    bm[i] -= 1e-6;
    CHECK(testing::rel_error(g.dv[i], (similarity_loss(a, bp) - similarity_loss(a, bm)) / 2e-6) < 1e-6);
  }
}

TEST_CASE("total loss weights the terms and rejects non-finite values") {
  LossComponents parts{0.5, 0.2, 0.4};
  CHECK(total_loss(parts, {1.0, 0.9}) == doctest::Approx(0.5 + 0.2 + 0.36));
  CHECK(total_loss(parts, {0.0, 0.0}) == 0.5);
  parts.cr = std::nan("");
  try {
    total_loss(parts, {1.0, 0.9});
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("CR") != std::string::npos);
  }
  CHECK_THROWS_AS(LossWeights({1.5, 0.5}).validate(), ConfigError);
  CHECK_THROWS_AS(LossWeights({0.5, -0.1}).validate(), ConfigError);
}

TEST_CASE("classifier head backward matches finite differences") {
  std::mt19937_64 rng(4);
  ClassifierHead head(5, 3);
  head.init(2);
  nn::ParamRefs ps;
  head.collect(ps);
  for (auto* p : ps)
    for (double& v : p->value) v += 0.3 * std::normal_distribution<double>()(rng);
  Tensor f = testing::random_tensor(1, 1, 5, rng);
  auto loss = [&] { return supervised_loss(2, head.probabilities(f)); };
  nn::Dense::Cache cache;
  const auto logits = head.logits(f, cache);
  for (auto* p : ps) p->zero_grad();
  const Tensor df = head.backward(supervised_loss_grad(2, softmax(logits)), cache);
  for (int i = 0; i < 5; ++i) {
    const double keep = f.data[i];
    f.data[i] = keep + 1e-6;
    const double up = loss();
    f.data[i] = keep - 1e-6;
    const double down = loss();
    f.data[i] = keep;
    CHECK(testing::rel_error(df.data[i], (up - down) / 2e-6) < 1e-6);
  }
}
