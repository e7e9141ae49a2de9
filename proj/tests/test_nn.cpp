#include <doctest.h>

#include <functional>

#include "jointssl/errors.hpp"
#include "jointssl/nn.hpp"
#include "support.hpp"

using namespace jointssl;
using testing::random_tensor;
using testing::rel_error;

namespace {

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Checks d<dy, f(x)>/dx and d<dy, f(x)>/dparam against central differences.
// `backward` must return dx and accumulate into the params' grad.
void check_layer(const std::function<Tensor(const Tensor&)>& forward,
                 const std::function<Tensor(const Tensor&, const Tensor&)>& backward, nn::ParamRefs params,
                 Tensor x, std::mt19937_64& rng) {
  const Tensor y = forward(x);
  const Tensor dy = random_tensor(y.h, y.w, y.c, rng);
  for (auto* p : params) p->zero_grad();
  const Tensor dx = backward(x, dy);
  const double h = 1e-6;
  auto objective = [&] { return dot(dy, forward(x)); };
  for (std::size_t i = 0; i < x.size(); i += 1 + x.size() / 13) {
    const double keep = x.data[i];
    x.data[i] = keep + h;
    const double up = objective();
    x.data[i] = keep - h;
    const double down = objective();
    x.data[i] = keep;
    CHECK(rel_error(dx.data[i], (up - down) / (2 * h)) < 1e-6);
  }
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); i += 1 + p->size() / 11) {
      const double keep = p->value[i];
      p->value[i] = keep + h;
      const double up = objective();
      p->value[i] = keep - h;
      const double down = objective();
      p->value[i] = keep;
      INFO(p->name << "[" << i << "]");
      CHECK(rel_error(p->grad[i], (up - down) / (2 * h)) < 1e-6);
    }
  }
}

void randomize(nn::ParamRefs params, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto* p : params)
    for (double& v : p->value) v += n(rng);
}

}  // namespace

TEST_CASE("dense layer gradients") {
  std::mt19937_64 rng(1);
  nn::Dense layer("d", 5, 4);
  layer.init(0.3, rng);
  nn::ParamRefs ps;
  layer.collect(ps);
  randomize(ps, rng);
  nn::Dense::Cache cache;
  check_layer([&](const Tensor& x) { return layer.forward(x, cache); },
              [&](const Tensor& x, const Tensor& dy) {
                layer.forward(x, cache);
                return layer.backward(dy, cache);
              },
              ps, random_tensor(3, 2, 5, rng), rng);
}

TEST_CASE("layer norm gradients") {
  std::mt19937_64 rng(2);
  nn::LayerNorm layer("ln", 6);
  nn::ParamRefs ps;
  layer.collect(ps);
  randomize(ps, rng);
  nn::LayerNorm::Cache cache;
  check_layer([&](const Tensor& x) { return layer.forward(x, cache); },
              [&](const Tensor& x, const Tensor& dy) {
                layer.forward(x, cache);
                return layer.backward(dy, cache);
              },
              ps, random_tensor(2, 3, 6, rng), rng);
}

TEST_CASE("layer norm output is normalized per pixel") {
  std::mt19937_64 rng(3);
  nn::LayerNorm layer("ln", 8);
  nn::LayerNorm::Cache cache;
  const Tensor y = layer.forward(random_tensor(2, 2, 8, rng, -5, 5), cache);
  for (int p = 0; p < 4; ++p) {
    double mean = 0, sq = 0;
    for (int c = 0; c < 8; ++c) mean += y.data[p * 8 + c] / 8;
    for (int c = 0; c < 8; ++c) sq += (y.data[p * 8 + c] - mean) * (y.data[p * 8 + c] - mean) / 8;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sq == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("depthwise convolution gradients and oracle") {
  std::mt19937_64 rng(4);
  nn::DepthwiseConv layer("dw", 3, 3);
  layer.init(0.5, rng);
  nn::ParamRefs ps;
  layer.collect(ps);
  randomize(ps, rng);
  nn::DepthwiseConv::Cache cache;
  const Tensor x = random_tensor(5, 4, 3, rng);
  check_layer([&](const Tensor& in) { return layer.forward(in, cache); },
              [&](const Tensor& in, const Tensor& dy) {
                layer.forward(in, cache);
                return layer.backward(dy, cache);
              },
              ps, x, rng);

  // Direct zero-padded convolution.
  const Tensor y = layer.forward(x, cache);
  const auto& w = layer.weight().value;
  const auto& b = layer.bias().value;
  for (int yy = 0; yy < 5; ++yy)
    for (int xx = 0; xx < 4; ++xx)
      for (int c = 0; c < 3; ++c) {
        double s = b[c];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int sy = yy + ky - 1, sx = xx + kx - 1;
            if (sy < 0 || sy >= 5 || sx < 0 || sx >= 4) continue;
            s += w[(ky * 3 + kx) * 3 + c] * x.at(sy, sx, c);
          }
        CHECK(y.at(yy, xx, c) == doctest::Approx(s).epsilon(1e-12));
      }
}

TEST_CASE("patch convolution gradients") {
  std::mt19937_64 rng(5);
  nn::PatchConv layer("pc", 3, 4, 2);
  layer.init(0.3, rng);
  nn::ParamRefs ps;
  layer.collect(ps);
  randomize(ps, rng);
  nn::PatchConv::Cache cache;
  check_layer([&](const Tensor& x) { return layer.forward(x, cache); },
              [&](const Tensor& x, const Tensor& dy) {
                layer.forward(x, cache);
                return layer.backward(dy, cache);
              },
              ps, random_tensor(4, 6, 3, rng), rng);
}

TEST_CASE("patch deconvolution gradients") {
  std::mt19937_64 rng(6);
  nn::PatchDeconv layer("pd", 4, 3, 2);
  layer.init(0.3, rng);
  nn::ParamRefs ps;
  layer.collect(ps);
  randomize(ps, rng);
  nn::PatchDeconv::Cache cache;
  check_layer([&](const Tensor& x) { return layer.forward(x, cache); },
              [&](const Tensor& x, const Tensor& dy) {
                layer.forward(x, cache);
                return layer.backward(dy, cache);
              },
              ps, random_tensor(2, 3, 4, rng), rng);
}

TEST_CASE("activation derivatives") {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor(3, 3, 4, rng, -3, 3);
  for (auto act : {nn::Activation::gelu, nn::Activation::leaky_relu, nn::Activation::elu, nn::Activation::sigmoid}) {
    const double slope = act == nn::Activation::elu ? 1.0 : 0.01;
    const Tensor dy = random_tensor(3, 3, 4, rng);
    const Tensor dx = nn::activate_backward(act, x, dy, slope);
    for (std::size_t i = 0; i < x.size(); ++i) {
      Tensor a = x, b = x;
      a.data[i] += 1e-6;
      b.data[i] -= 1e-6;
      const double fd = (nn::activate(act, a, slope).data[i] - nn::activate(act, b, slope).data[i]) / 2e-6;
      CHECK(rel_error(dx.data[i], fd * dy.data[i]) < 1e-6);
    }
  }
}

TEST_CASE("gelu reference values") {
  CHECK(nn::gelu(0.0) == 0.0);
  CHECK(nn::gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(nn::gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
}

TEST_CASE("space_to_depth and depth_to_space are inverse") {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor(4, 6, 3, rng);
  const Tensor s = nn::space_to_depth(x, 2);
  CHECK(s.h == 2);
  CHECK(s.w == 3);
  CHECK(s.c == 12);
  CHECK(nn::depth_to_space(s, 2).data == x.data);
  CHECK_THROWS_AS(nn::space_to_depth(random_tensor(3, 4, 1, rng), 2), ShapeError);
}
