#include <doctest.h>

#include <Eigen/Dense>
#include <fstream>
#include <opencv2/imgcodecs.hpp>

#include "jointssl/augment.hpp"
#include "jointssl/dataset.hpp"
#include "jointssl/errors.hpp"
#include "support.hpp"

using namespace jointssl;

TEST_CASE("synthetic generation counts and determinism") {
  const Dataset a = generate_synthetic(50, 9, 64, 1);
  CHECK(a.samples.size() == 450);
  CHECK(a.class_counts() == std::vector<int>(9, 50));
  CHECK(a.num_classes() == 9);
  for (const auto& s : a.samples) {
    REQUIRE(s.image.h == 64);
    CHECK(s.image.c == 3);
    for (double v : s.image.data) CHECK((v >= 0.0 && v <= 1.0));
  }
  const Dataset b = generate_synthetic(50, 9, 64, 1);
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].image.data == b.samples[i].image.data);
  CHECK_FALSE(generate_synthetic(2, 2, 16, 2).samples[0].image.data == generate_synthetic(2, 2, 16, 3).samples[0].image.data);

  CHECK_THROWS_AS(generate_synthetic(5, 2, 30, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(0, 2, 32, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(5, 1, 32, 1), ConfigError);
}

TEST_CASE("a linear probe on raw pixels beats chance") {
  const Dataset ds = generate_synthetic(10, 2, 32, 7);
  const int n = static_cast<int>(ds.samples.size());
  const int d = static_cast<int>(ds.samples[0].image.size());
  Eigen::MatrixXd x(n, d + 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = ds.samples[i].image.data[j];
    x(i, d) = 1.0;
    y(i) = *ds.samples[i].label == 0 ? -1.0 : 1.0;
  }
  // Ridge regression in dual form: w = X^T (X X^T + lambda I)^-1 y.
  const Eigen::MatrixXd gram = x * x.transpose() + 1e-3 * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd w = x.transpose() * gram.ldlt().solve(y);
  const Eigen::VectorXd pred = x * w;
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += (pred(i) > 0.0) == (y(i) > 0.0);
  CHECK(static_cast<double>(correct) / n > 0.5);
}

TEST_CASE("rotating a uniform image leaves its interior unchanged") {
  ImageTensor x(32, 32, 3, 0.37);
  for (double angle : {13.0, 90.0, -145.0}) {
    const ImageTensor r = rotate(x, angle);
    for (int y = 0; y < 32; ++y)
      for (int xx = 0; xx < 32; ++xx) {
        if (std::hypot(y - 15.5, xx - 15.5) > 14.0) continue;
        for (int c = 0; c < 3; ++c) CHECK(r.at(y, xx, c) == doctest::Approx(0.37).epsilon(1e-12));
      }
  }
}

TEST_CASE("DeepWeeds-style ingestion") {
  const auto dir = testing::scratch_dir("deepweeds");
  for (int i = 0; i < 10; ++i) {
    cv::Mat img(20, 24, CV_8UC3, cv::Scalar(10 * i, 255, 0));
    cv::imwrite((dir / ("im" + std::to_string(i) + ".png")).string(), img);
  }
  {
    std::ofstream csv(dir / "labels.csv");
    csv << "Filename,Label,Species\n";
    for (int i = 0; i < 10; ++i) csv << "im" << i << ".png," << (i < 4 ? 0 : 1) << "," << (i < 4 ? "Alpha" : "Beta") << "\n";
  }
  DeepWeedsOptions opt;
  opt.num_classes = 2;
  opt.resolution = 16;
  const Dataset ds = load_deepweeds(dir, dir / "labels.csv", opt);
  CHECK(ds.samples.size() == 10);
  CHECK(ds.class_counts() == std::vector<int>{4, 6});
  CHECK(ds.label_space.classes == std::vector<std::string>{"Alpha", "Beta"});
  CHECK(ds.provenance == Provenance::deepweeds);
  const ImageTensor& im = ds.samples[3].image;
  CHECK(im.h == 16);
  CHECK(im.w == 16);
  // BGR (30, 255, 0) decoded as RGB and scaled to [0, 1].
  CHECK(im.at(5, 5, 0) == doctest::Approx(0.0));
  CHECK(im.at(5, 5, 1) == doctest::Approx(1.0));
  CHECK(im.at(5, 5, 2) == doctest::Approx(30.0 / 255.0));

  std::ofstream(dir / "empty.csv") << "Filename,Label,Species\n";
  const Dataset empty = load_deepweeds(dir, dir / "empty.csv", opt);
  CHECK(empty.samples.empty());
  CHECK(empty.num_classes() == 2);

  std::ofstream(dir / "missing.csv") << "nothere.png,0,Alpha\n";
  try {
    load_deepweeds(dir, dir / "missing.csv", opt);
    FAIL("expected IngestionError");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("nothere.png") != std::string::npos);
  }
  std::ofstream(dir / "badlabel.csv") << "im0.png,2,Gamma\n";
  CHECK_THROWS_AS(load_deepweeds(dir, dir / "badlabel.csv", opt), SchemaError);
  CHECK_THROWS_AS(load_deepweeds(dir, dir / "nope.csv", opt), IngestionError);
}

TEST_CASE("the DeepWeeds label space has nine classes ending in the negative class") {
  const LabelSpace ls = deepweeds_label_space();
  CHECK(ls.size() == 9);
  CHECK(ls.classes.back() == "Negative");
}
