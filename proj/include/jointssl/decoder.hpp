#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "jointssl/encoder.hpp"
#include "jointssl/nn.hpp"

namespace jointssl {

/// Mirrors an EncoderConfig. Stage s holds depth_s + 1 deconvolution blocks,
/// one per encoder skip tap of that stage.
struct DecoderConfig {
  EncoderConfig encoder;
  double leaky_slope = 0.01;
  double elu_alpha = 1.0;

  int blocks_in_stage(int stage) const { return encoder.stage_depths[stage - 1] + 1; }
  /// LeakyReLU for stages 4, 3, 2; ELU for stage 1.
  nn::Activation activation(int stage) const {
    return stage == 1 ? nn::Activation::elu : nn::Activation::leaky_relu;
  }
  double activation_param(int stage) const { return stage == 1 ? elu_alpha : leaky_slope; }
};

namespace detail {
struct DeconvBlockCache {
  nn::Dense::Cache deconv;
  nn::LayerNorm::Cache norm;
  Tensor pre_act;
};
struct UpsampleCache {
  nn::LayerNorm::Cache norm;
  nn::PatchDeconv::Cache deconv;
};
}  // namespace detail

struct DecoderPass {
  ImageTensor reconstruction;

  std::vector<detail::DeconvBlockCache> blocks;  // processing order
  std::vector<detail::UpsampleCache> ups;        // 3 entries, stage 3, 2, 1
  nn::PatchDeconv::Cache final_deconv;
  Tensor final_pre_sigmoid;
  /// Times each skip tap was read; all ones after a successful decode.
  std::vector<int> consumed;
};

/// Gradients a decoder backward pass hands to the encoder.
struct DecoderGrads {
  std::vector<Tensor> skips;  // indexed like the SkipBundle
  Tensor input;               // w.r.t. the stage-4 seed tensor
};

class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(const DecoderConfig& cfg);

  const DecoderConfig& config() const { return cfg_; }
  void init(std::uint64_t seed);

  /// Layer norm + 2x2 stride-2 transposed convolution into `to_stage` (3..1).
  FeatureMap upsample_layer(int to_stage, const FeatureMap& h) const;
  /// sum -> 1x1 deconvolution -> layer norm -> stage activation.
  /// `block` indexes the stage's blocks in processing order.
  FeatureMap deconv_block(const FeatureMap& skip, const FeatureMap& prev, int stage, int block) const;

  /// Reconstructs the image from the stage-4 output, reading skips last-in
  /// first-out. Throws ShapeError if the bundle does not match the config.
  DecoderPass decode(const FeatureMap& stage4_output, const SkipBundle& skips) const;
  DecoderGrads backward(const DecoderPass& pass, const Tensor& d_reconstruction);

  void collect(nn::ParamRefs& out);

 private:
  struct DeconvBlock {
    nn::Dense deconv;
    nn::LayerNorm norm;
  };
  struct Upsample {
    nn::LayerNorm norm;
    nn::PatchDeconv deconv;
  };

  FeatureMap block_forward(const DeconvBlock& b, int stage, const FeatureMap& s,
                           detail::DeconvBlockCache& c) const;
  Tensor block_backward(DeconvBlock& b, int stage, const Tensor& dy,
                        const detail::DeconvBlockCache& c);

  DecoderConfig cfg_;
  std::array<std::vector<DeconvBlock>, 4> stages_;  // index = stage - 1
  std::array<Upsample, 3> ups_;                     // index = to_stage - 1
  nn::PatchDeconv final_;
};

}  // namespace jointssl
