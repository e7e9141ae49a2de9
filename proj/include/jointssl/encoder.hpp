#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "jointssl/nn.hpp"
#include "jointssl/tensor.hpp"

namespace jointssl {

/// Shape of a four-stage ConvNeXt-style encoder.
struct EncoderConfig {
  std::array<int, 4> stage_depths{1, 1, 3, 1};
  std::array<int, 4> stage_widths{32, 64, 128, 256};
  int dw_kernel = 7;
  int expansion = 4;
  int patch = 4;

  static EncoderConfig micro() { return {}; }
  static EncoderConfig base() { return {{3, 3, 27, 3}, {128, 256, 512, 1024}, 7, 4, 4}; }

  /// Throws ConfigError unless depths are positive, widths strictly
  /// increasing, and the depthwise kernel odd.
  void validate() const;

  int total_blocks() const;
  /// Residual taps (one per block) plus non-residual taps (stem + 3 downsamples).
  int skip_count() const { return total_blocks() + 4; }
  /// Input sides must be multiples of patch * 2^3.
  int input_multiple() const { return patch * 8; }

  bool operator==(const EncoderConfig&) const = default;
};

enum class SkipKind { residual, non_residual };

/// One encoder feature map exposed to the decoder.
struct SkipTap {
  int stage = 1;  // 1..4
  SkipKind kind = SkipKind::residual;
  FeatureMap map;
};

/// Taps in exact encoder production order: stem, stage-1 blocks, downsample,
/// stage-2 blocks, ... The last entry is the stage-4 output.
using SkipBundle = std::vector<SkipTap>;

/// f(x): global-average-pooled, layer-normalized stage-4 output (1 x 1 x C4).
using FeatureVector = Tensor;

namespace detail {
struct StemCache {
  nn::PatchConv::Cache conv;
  nn::LayerNorm::Cache norm;
};
struct BlockCache {
  nn::DepthwiseConv::Cache dw;
  nn::LayerNorm::Cache norm;
  nn::Dense::Cache pw1;
  Tensor hidden;  // pre-GELU
  nn::Dense::Cache pw2;
};
struct DownsampleCache {
  nn::LayerNorm::Cache norm;
  nn::PatchConv::Cache conv;
};
}  // namespace detail

/// Everything a forward pass produces: outputs plus the activations needed to
/// backpropagate through it.
struct EncoderPass {
  SkipBundle skips;
  FeatureVector feature;

  detail::StemCache stem;
  std::vector<detail::BlockCache> blocks;      // production order
  std::vector<detail::DownsampleCache> downs;  // 3 entries
  nn::LayerNorm::Cache feature_norm;
  int input_h = 0;
  int input_w = 0;

  const FeatureMap& stage4_output() const { return skips.back().map; }
};

class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }

  /// Truncated-normal (std 0.02) weights, zero biases, unit LN scales.
  void init(std::uint64_t seed);

  /// 4x4 stride-4 convolution followed by layer norm.
  FeatureMap patchify(const ImageTensor& x) const;
  /// Residual block `index` (0-based) of `stage` (1..4).
  FeatureMap convnext_block(int stage, int index, const FeatureMap& h) const;
  /// Layer norm + 2x2 stride-2 convolution into stage `to_stage` (2..4).
  FeatureMap downsample(int to_stage, const FeatureMap& h) const;

  EncoderPass encode(const ImageTensor& x) const;

  /// Accumulates parameter gradients. `skip_grads` holds one entry per tap
  /// (an empty Tensor means zero); `feature_grad` may be empty.
  /// Returns d loss / d input.
  Tensor backward(const EncoderPass& pass, std::span<const Tensor> skip_grads,
                  const Tensor& feature_grad);

  void collect(nn::ParamRefs& out);
  std::size_t parameter_count();

 private:
  struct Stem {
    nn::PatchConv conv;
    nn::LayerNorm norm;
  };
  struct Block {
    nn::DepthwiseConv dw;
    nn::LayerNorm norm;
    nn::Dense pw1;
    nn::Dense pw2;
  };
  struct Downsample {
    nn::LayerNorm norm;
    nn::PatchConv conv;
  };

  FeatureMap stem_forward(const ImageTensor& x, detail::StemCache& c) const;
  FeatureMap block_forward(const Block& b, const FeatureMap& h, detail::BlockCache& c) const;
  FeatureMap down_forward(const Downsample& d, const FeatureMap& h, detail::DownsampleCache& c) const;
  Tensor block_backward(Block& b, const Tensor& dy, const detail::BlockCache& c);

  EncoderConfig cfg_;
  Stem stem_;
  std::array<std::vector<Block>, 4> stages_;
  std::array<Downsample, 3> downs_;
  nn::LayerNorm feature_norm_;
};

}  // namespace jointssl
