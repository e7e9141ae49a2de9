#pragma once

// Layer primitives with explicit backward passes.
//
// Layers are stateless with respect to activations: forward() fills a
// caller-owned cache and backward() consumes it, so one set of parameters can
// serve several concurrent forward passes (the two views of a sample).
// backward() accumulates into Param::grad.

#include <random>
#include <string>
#include <vector>

#include "jointssl/tensor.hpp"

namespace jointssl::nn {

/// A named, trainable tensor together with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s, double fill = 0.0);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

using ParamRefs = std::vector<Param*>;

/// Truncated normal (cut at +-2 std) initializer.
void init_trunc_normal(Param& p, double std, std::mt19937_64& rng);

/// Layer normalization over the channel axis of every pixel.
class LayerNorm {
 public:
  struct Cache {
    Tensor xhat;
    std::vector<double> rstd;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int channels, double eps = 1e-6);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(ParamRefs& out) { out.push_back(&gamma_); out.push_back(&beta_); }
  int channels() const { return static_cast<int>(gamma_.size()); }

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }

 private:
  Param gamma_;
  Param beta_;
  double eps_ = 1e-6;
};

/// Per-pixel affine map Y = X W + b (a 1x1 convolution, or a dense layer on a
/// 1x1 map). W is stored [in, out] row-major.
class Dense {
 public:
  struct Cache {
    Tensor x;
  };

  Dense() = default;
  Dense(const std::string& name, int in, int out, bool bias = true);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(ParamRefs& out);
  void init(double std, std::mt19937_64& rng);

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Param& weight() { return weight_; }
  const Param& weight() const { return weight_; }
  Param& bias() { return bias_; }

 private:
  Param weight_;
  Param bias_;
  int in_ = 0;
  int out_ = 0;
  bool has_bias_ = true;
};

/// Depthwise k x k convolution, stride 1, zero padding k/2. Weight [k, k, C].
class DepthwiseConv {
 public:
  struct Cache {
    Tensor x;
  };

  DepthwiseConv() = default;
  DepthwiseConv(const std::string& name, int channels, int kernel);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(ParamRefs& out) { out.push_back(&weight_); out.push_back(&bias_); }
  void init(double std, std::mt19937_64& rng);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  Param weight_;
  Param bias_;
  int channels_ = 0;
  int kernel_ = 0;
};

/// Non-overlapping p x p convolution with stride p (patchify stem and the
/// encoder downsampling layers). Weight [p*p*Cin, Cout], patch order (ky, kx, ci).
class PatchConv {
 public:
  using Cache = Dense::Cache;

  PatchConv() = default;
  PatchConv(const std::string& name, int in, int out, int patch);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(ParamRefs& out) { linear_.collect(out); }
  void init(double std, std::mt19937_64& rng) { linear_.init(std, rng); }
  int patch() const { return patch_; }
  Dense& linear() { return linear_; }

 private:
  Dense linear_;
  int patch_ = 1;
};

/// Transposed p x p convolution with stride p (decoder upsampling and the
/// final reconstruction layer). Weight [Cin, p*p*Cout], bias [Cout].
class PatchDeconv {
 public:
  struct Cache {
    Tensor x;
  };

  PatchDeconv() = default;
  PatchDeconv(const std::string& name, int in, int out, int patch);

  Tensor forward(const Tensor& x, Cache& cache) const;
  Tensor backward(const Tensor& dy, const Cache& cache);
  void collect(ParamRefs& out) { out.push_back(&weight_); out.push_back(&bias_); }
  void init(double std, std::mt19937_64& rng);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  Param weight_;
  Param bias_;
  int in_ = 0;
  int out_ = 0;
  int patch_ = 1;
};

enum class Activation { gelu, leaky_relu, elu, sigmoid };

/// Element-wise activation. `slope` is the LeakyReLU negative slope or the
/// ELU alpha. The cache keeps the pre-activation input.
Tensor activate(Activation act, const Tensor& x, double slope = 0.0);
Tensor activate_backward(Activation act, const Tensor& x, const Tensor& dy, double slope = 0.0);

/// Rearranges p x p spatial blocks into channels: (h, w, c) -> (h/p, w/p, p*p*c).
Tensor space_to_depth(const Tensor& x, int p);
/// Inverse of space_to_depth.
Tensor depth_to_space(const Tensor& x, int p);

double gelu(double x);

}  // namespace jointssl::nn
