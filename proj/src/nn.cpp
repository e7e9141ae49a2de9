#include "jointssl/nn.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

#include "jointssl/errors.hpp"

namespace jointssl {

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw ShapeError("tensor add: " + shape_str() + " vs " + o.shape_str());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  return *this;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  r += b;
  return r;
}

namespace nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::RowVectorXd>;

MapMat rows_of(Tensor& t) { return MapMat(t.data.data(), t.pixels(), t.c); }
CMapMat rows_of(const Tensor& t) { return CMapMat(t.data.data(), t.pixels(), t.c); }

// Plain row-order accumulation: Eigen's colwise().sum() into an unaligned
// destination changes the summation order with the buffer address.
void add_channel_sums(const Tensor& t, std::vector<double>& out) {
  for (int p = 0; p < t.pixels(); ++p) {
    const double* row = t.data.data() + static_cast<std::size_t>(p) * t.c;
    for (int ch = 0; ch < t.c; ++ch) out[ch] += row[ch];
  }
}

}  // namespace

Param::Param(std::string n, std::vector<int> s, double fill) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, fill);
  grad.assign(count, 0.0);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void init_trunc_normal(Param& p, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : p.value) {
    double z = dist(rng);
    while (std::abs(z) > 2.0) z = dist(rng);
    v = z * std;
  }
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(const std::string& name, int channels, double eps)
    : gamma_(name + ".weight", {channels}, 1.0), beta_(name + ".bias", {channels}, 0.0), eps_(eps) {}

Tensor LayerNorm::forward(const Tensor& x, Cache& cache) const {
  const int c = x.c;
  if (c != channels()) {
    throw ShapeError("layer norm " + gamma_.name + ": expected " + std::to_string(channels()) +
                     " channels, got " + x.shape_str());
  }
  Tensor y(x.h, x.w, c);
  cache.xhat = Tensor(x.h, x.w, c);
  cache.rstd.assign(x.pixels(), 0.0);
  const double* g = gamma_.value.data();
  const double* b = beta_.value.data();
  for (int r = 0; r < x.pixels(); ++r) {
    const double* in = x.data.data() + static_cast<std::size_t>(r) * c;
    double mean = 0.0;
    for (int i = 0; i < c; ++i) mean += in[i];
    mean /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= c;
    const double rstd = 1.0 / std::sqrt(var + eps_);
    cache.rstd[r] = rstd;
    double* xh = cache.xhat.data.data() + static_cast<std::size_t>(r) * c;
    double* out = y.data.data() + static_cast<std::size_t>(r) * c;
    for (int i = 0; i < c; ++i) {
      xh[i] = (in[i] - mean) * rstd;
      out[i] = xh[i] * g[i] + b[i];
    }
  }
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy, const Cache& cache) {
  const int c = dy.c;
  Tensor dx(dy.h, dy.w, c);
  const double* g = gamma_.value.data();
  double* dg = gamma_.grad.data();
  double* db = beta_.grad.data();
  std::vector<double> dxhat(c);
  for (int r = 0; r < dy.pixels(); ++r) {
    const double* d = dy.data.data() + static_cast<std::size_t>(r) * c;
    const double* xh = cache.xhat.data.data() + static_cast<std::size_t>(r) * c;
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (int i = 0; i < c; ++i) {
      dg[i] += d[i] * xh[i];
      db[i] += d[i];
      dxhat[i] = d[i] * g[i];
      mean_d += dxhat[i];
      mean_dx += dxhat[i] * xh[i];
    }
    mean_d /= c;
    mean_dx /= c;
    double* out = dx.data.data() + static_cast<std::size_t>(r) * c;
    const double rstd = cache.rstd[r];
    for (int i = 0; i < c; ++i) out[i] = rstd * (dxhat[i] - mean_d - xh[i] * mean_dx);
  }
  return dx;
}

// -------------------------------------------------------------------- Dense

Dense::Dense(const std::string& name, int in, int out, bool bias)
    : weight_(name + ".weight", {in, out}), bias_(name + ".bias", {out}), in_(in), out_(out),
      has_bias_(bias) {}

void Dense::collect(ParamRefs& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

void Dense::init(double std, std::mt19937_64& rng) {
  init_trunc_normal(weight_, std, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor Dense::forward(const Tensor& x, Cache& cache) const {
  if (x.c != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " +
                     x.shape_str());
  }
  cache.x = x;
  Tensor y(x.h, x.w, out_);
  auto Y = rows_of(y);
  Y.noalias() = rows_of(x) * CMapMat(weight_.value.data(), in_, out_);
  if (has_bias_) Y.rowwise() += CMapVec(bias_.value.data(), out_);
  return y;
}

Tensor Dense::backward(const Tensor& dy, const Cache& cache) {
  auto dY = rows_of(dy);
  MapMat(weight_.grad.data(), in_, out_).noalias() += rows_of(cache.x).transpose() * dY;
  if (has_bias_) add_channel_sums(dy, bias_.grad);
  Tensor dx(dy.h, dy.w, in_);
  rows_of(dx).noalias() = dY * CMapMat(weight_.value.data(), in_, out_).transpose();
  return dx;
}

// ------------------------------------------------------------ DepthwiseConv

DepthwiseConv::DepthwiseConv(const std::string& name, int channels, int kernel)
    : weight_(name + ".weight", {kernel, kernel, channels}), bias_(name + ".bias", {channels}),
      channels_(channels), kernel_(kernel) {}

void DepthwiseConv::init(double std, std::mt19937_64& rng) {
  init_trunc_normal(weight_, std, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor DepthwiseConv::forward(const Tensor& x, Cache& cache) const {
  if (x.c != channels_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(channels_) + " channels, got " +
                     x.shape_str());
  }
  cache.x = x;
  const int c = channels_;
  const int pad = kernel_ / 2;
  Tensor y(x.h, x.w, c);
  for (int oy = 0; oy < x.h; ++oy) {
    for (int ox = 0; ox < x.w; ++ox) {
      double* out = y.pixel(oy, ox);
      for (int i = 0; i < c; ++i) out[i] = bias_.value[i];
      for (int ky = 0; ky < kernel_; ++ky) {
        const int iy = oy + ky - pad;
        if (iy < 0 || iy >= x.h) continue;
        for (int kx = 0; kx < kernel_; ++kx) {
          const int ix = ox + kx - pad;
          if (ix < 0 || ix >= x.w) continue;
          const double* in = x.pixel(iy, ix);
          const double* k = weight_.value.data() + (static_cast<std::size_t>(ky) * kernel_ + kx) * c;
          for (int i = 0; i < c; ++i) out[i] += k[i] * in[i];
        }
      }
    }
  }
  return y;
}

Tensor DepthwiseConv::backward(const Tensor& dy, const Cache& cache) {
  const Tensor& x = cache.x;
  const int c = channels_;
  const int pad = kernel_ / 2;
  Tensor dx(x.h, x.w, c);
  for (int oy = 0; oy < x.h; ++oy) {
    for (int ox = 0; ox < x.w; ++ox) {
      const double* d = dy.pixel(oy, ox);
      for (int i = 0; i < c; ++i) bias_.grad[i] += d[i];
      for (int ky = 0; ky < kernel_; ++ky) {
        const int iy = oy + ky - pad;
        if (iy < 0 || iy >= x.h) continue;
        for (int kx = 0; kx < kernel_; ++kx) {
          const int ix = ox + kx - pad;
          if (ix < 0 || ix >= x.w) continue;
          const std::size_t koff = (static_cast<std::size_t>(ky) * kernel_ + kx) * c;
          const double* k = weight_.value.data() + koff;
          double* dk = weight_.grad.data() + koff;
          const double* in = x.pixel(iy, ix);
          double* din = dx.pixel(iy, ix);
          for (int i = 0; i < c; ++i) {
            dk[i] += d[i] * in[i];
            din[i] += d[i] * k[i];
          }
        }
      }
    }
  }
  return dx;
}

// ------------------------------------------------------- space/depth shuffles

Tensor space_to_depth(const Tensor& x, int p) {
  if (x.h % p != 0 || x.w % p != 0) {
    throw ShapeError("spatial dims " + x.shape_str() + " not divisible by " + std::to_string(p));
  }
  Tensor y(x.h / p, x.w / p, p * p * x.c);
  for (int oy = 0; oy < y.h; ++oy) {
    for (int ox = 0; ox < y.w; ++ox) {
      double* out = y.pixel(oy, ox);
      for (int ky = 0; ky < p; ++ky) {
        for (int kx = 0; kx < p; ++kx) {
          const double* in = x.pixel(oy * p + ky, ox * p + kx);
          std::copy(in, in + x.c, out + (ky * p + kx) * x.c);
        }
      }
    }
  }
  return y;
}

Tensor depth_to_space(const Tensor& x, int p) {
  if (x.c % (p * p) != 0) {
    throw ShapeError("channels of " + x.shape_str() + " not divisible by " + std::to_string(p * p));
  }
  const int c = x.c / (p * p);
  Tensor y(x.h * p, x.w * p, c);
  for (int iy = 0; iy < x.h; ++iy) {
    for (int ix = 0; ix < x.w; ++ix) {
      const double* in = x.pixel(iy, ix);
      for (int ky = 0; ky < p; ++ky) {
        for (int kx = 0; kx < p; ++kx) {
          const double* src = in + (ky * p + kx) * c;
          std::copy(src, src + c, y.pixel(iy * p + ky, ix * p + kx));
        }
      }
    }
  }
  return y;
}

// ---------------------------------------------------------------- PatchConv

PatchConv::PatchConv(const std::string& name, int in, int out, int patch)
    : linear_(name, patch * patch * in, out), patch_(patch) {}

Tensor PatchConv::forward(const Tensor& x, Cache& cache) const {
  if (x.h % patch_ != 0 || x.w % patch_ != 0) {
    throw ShapeError(linear_.weight().name + ": input " + x.shape_str() +
                     " not divisible by stride " + std::to_string(patch_));
  }
  return linear_.forward(space_to_depth(x, patch_), cache);
}

Tensor PatchConv::backward(const Tensor& dy, const Cache& cache) {
  return depth_to_space(linear_.backward(dy, cache), patch_);
}

// -------------------------------------------------------------- PatchDeconv

PatchDeconv::PatchDeconv(const std::string& name, int in, int out, int patch)
    : weight_(name + ".weight", {in, patch * patch * out}), bias_(name + ".bias", {out}), in_(in),
      out_(out), patch_(patch) {}

void PatchDeconv::init(double std, std::mt19937_64& rng) {
  init_trunc_normal(weight_, std, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor PatchDeconv::forward(const Tensor& x, Cache& cache) const {
  if (x.c != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " channels, got " +
                     x.shape_str());
  }
  cache.x = x;
  const int cols = patch_ * patch_ * out_;
  Tensor z(x.h, x.w, cols);
  rows_of(z).noalias() = rows_of(x) * CMapMat(weight_.value.data(), in_, cols);
  Tensor y = depth_to_space(z, patch_);
  rows_of(y).rowwise() += CMapVec(bias_.value.data(), out_);
  return y;
}

Tensor PatchDeconv::backward(const Tensor& dy, const Cache& cache) {
  const int cols = patch_ * patch_ * out_;
  add_channel_sums(dy, bias_.grad);
  Tensor dz = space_to_depth(dy, patch_);
  MapMat(weight_.grad.data(), in_, cols).noalias() += rows_of(cache.x).transpose() * rows_of(dz);
  Tensor dx(cache.x.h, cache.x.w, in_);
  rows_of(dx).noalias() = rows_of(dz) * CMapMat(weight_.value.data(), in_, cols).transpose();
  return dx;
}

// -------------------------------------------------------------- activations

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Tensor activate(Activation act, const Tensor& x, double slope) {
  Tensor y(x.h, x.w, x.c);
  const std::size_t n = x.size();
  const double* in = x.data.data();
  double* out = y.data.data();
  switch (act) {
    case Activation::gelu:
      for (std::size_t i = 0; i < n; ++i) out[i] = gelu(in[i]);
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : slope * in[i];
      break;
    case Activation::elu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : slope * std::expm1(in[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
      break;
  }
  return y;
}

Tensor activate_backward(Activation act, const Tensor& x, const Tensor& dy, double slope) {
  Tensor dx(x.h, x.w, x.c);
  const std::size_t n = x.size();
  const double* in = x.data.data();
  const double* d = dy.data.data();
  double* out = dx.data.data();
  constexpr double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  switch (act) {
    case Activation::gelu:
      for (std::size_t i = 0; i < n; ++i) {
        const double v = in[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        out[i] = d[i] * (cdf + v * pdf);
      }
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? d[i] : slope * d[i];
      break;
    case Activation::elu:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? d[i] : d[i] * slope * std::exp(in[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-in[i]));
        out[i] = d[i] * s * (1.0 - s);
      }
      break;
  }
  return dx;
}

}  // namespace nn
}  // namespace jointssl
