#include <doctest.h>

#include <cmath>

#include "jointssl/augment.hpp"
#include "jointssl/errors.hpp"
#include "jointssl/random.hpp"
#include "support.hpp"

using namespace jointssl;

namespace {

Tensor random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_tensor(h, w, 3, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("identity transform returns the input") {
  const Tensor x = random_image(16, 12, 1);
  Rng rng(2);
  CHECK(similarity_transform(x, SimilarityTransformConfig::identity(), rng).data == x.data);
}

TEST_CASE("transform output stays in [0, 1] and keeps the shape") {
  const Tensor x = random_image(24, 24, 3);
  SimilarityTransformConfig cfg;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const Tensor y = similarity_transform(x, cfg, rng);
    REQUIRE(y.same_shape(x));
    for (double v : y.data) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("transform is deterministic per generator state") {
  const Tensor x = random_image(16, 16, 4);
  Rng a(9), b(9);
  CHECK(similarity_transform(x, {}, a).data == similarity_transform(x, {}, b).data);
}

TEST_CASE("rotation by zero and by 360 degrees is the identity") {
  const Tensor x = random_image(10, 14, 5);
  const Tensor r0 = rotate(x, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r0.data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
  const Tensor r360 = rotate(x, 360.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r360.data[i] == doctest::Approx(x.data[i]).epsilon(1e-9));
}

TEST_CASE("rotation by 90 degrees permutes pixels of a square image") {
  const Tensor x = random_image(8, 8, 6);
  const Tensor r = rotate(x, 90.0);
  // A quarter turn maps pixel centres onto pixel centres; the sampled source
  // of every output pixel is one input pixel.
  std::vector<double> a = x.data, b = r.data;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
  const Tensor back = rotate(r, -90.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back.data[i] == doctest::Approx(x.data[i]).epsilon(1e-9));
}

TEST_CASE("flips are involutions") {
  const Tensor x = random_image(5, 7, 7);
  CHECK(flip_horizontal(flip_horizontal(x)).data == x.data);
  CHECK(flip_vertical(flip_vertical(x)).data == x.data);
  const Tensor h = flip_horizontal(x);
  CHECK(h.at(2, 0, 1) == x.at(2, 6, 1));
  const Tensor v = flip_vertical(x);
  CHECK(v.at(0, 3, 2) == x.at(4, 3, 2));
}

TEST_CASE("colour adjustments") {
  const Tensor x = random_image(4, 4, 8);
  CHECK(adjust_brightness(x, 1.0).data == x.data);
  const Tensor sat1 = adjust_saturation(x, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(sat1.data[i] == doctest::Approx(x.data[i]).epsilon(1e-14));

  const Tensor gray = adjust_saturation(x, 0.0);
  const double* p = gray.pixel(1, 2);
  const double* q = x.pixel(1, 2);
  const double luma = 0.299 * q[0] + 0.587 * q[1] + 0.114 * q[2];
  CHECK(p[0] == doctest::Approx(luma));
  CHECK(p[1] == doctest::Approx(luma));

  const Tensor bright = adjust_brightness(x, 3.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(bright.data[i] == std::min(1.0, 3.0 * x.data[i]));
}

TEST_CASE("noise has the requested moments and is not clamped") {
  Tensor x(64, 64, 3, 0.5);
  Rng rng(11);
  const Tensor y = add_gaussian_noise(x, {0.02, 0.1}, rng);
  double mean = 0.0, sq = 0.0;
  for (double v : y.data) mean += (v - 0.5) / y.size();
  for (double v : y.data) sq += (v - 0.5 - mean) * (v - 0.5 - mean) / y.size();
  // n = 12288: the sample mean has std 0.1/sqrt(n) ~ 9e-4.
  CHECK(std::abs(mean - 0.02) < 3.0 * 0.1 / std::sqrt(static_cast<double>(y.size())));
  CHECK(std::abs(std::sqrt(sq) - 0.1) < 4e-3);

  Tensor ones(8, 8, 3, 1.0);
  const Tensor z = add_gaussian_noise(ones, {0.0, 0.5}, rng);
  CHECK(*std::max_element(z.data.begin(), z.data.end()) > 1.0);
}

TEST_CASE("zero noise copies the image and leaves the generator untouched") {
  const Tensor x = random_image(6, 6, 12);
  Rng a(5), b(5);
  CHECK(add_gaussian_noise(x, {0.0, 0.0}, a).data == x.data);
  CHECK(a() == b());
}

TEST_CASE("invalid configurations are rejected") {
  SimilarityTransformConfig cfg;
  cfg.hflip_p = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.scale_min = 0.95;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS((NoiseSpec{0.0, -0.1}).validate(), ConfigError);
}
