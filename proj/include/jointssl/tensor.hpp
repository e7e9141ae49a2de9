#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace jointssl {

/// Dense channels-last map of shape height x width x channels.
///
/// Element (y, x, ch) lives at ((y * w) + x) * c + ch, so the storage doubles
/// as a row-major (h*w) x c matrix. Images are Tensors with c == 3 and values
/// in [0, 1]; pooled feature vectors are Tensors of shape 1 x 1 x C.
struct Tensor {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int height, int width, int channels, double fill = 0.0)
      : h(height), w(width), c(channels),
        data(static_cast<std::size_t>(height) * width * channels, fill) {}

  std::size_t size() const { return data.size(); }
  int pixels() const { return h * w; }
  bool empty() const { return data.empty(); }

  double& at(int y, int x, int ch) {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  double at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  double* pixel(int y, int x) { return data.data() + (static_cast<std::size_t>(y) * w + x) * c; }
  const double* pixel(int y, int x) const {
    return data.data() + (static_cast<std::size_t>(y) * w + x) * c;
  }

  bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }
  std::string shape_str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
  }

  Tensor& operator+=(const Tensor& o);
};

using ImageTensor = Tensor;
using FeatureMap = Tensor;

/// Element-wise a + b; throws ShapeError on mismatch.
Tensor add(const Tensor& a, const Tensor& b);

}  // namespace jointssl
