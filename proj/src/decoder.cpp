#include "jointssl/decoder.hpp"

#include <random>

#include "jointssl/errors.hpp"

namespace jointssl {

Decoder::Decoder(const DecoderConfig& cfg) : cfg_(cfg) {
  cfg_.encoder.validate();
  const auto& w = cfg_.encoder.stage_widths;
  for (int stage = 4; stage >= 1; --stage) {
    for (int b = 0; b < cfg_.blocks_in_stage(stage); ++b) {
      const std::string p =
          "decoder.stages." + std::to_string(stage - 1) + ".blocks." + std::to_string(b);
      DeconvBlock blk;
      blk.deconv = nn::Dense(p + ".deconv", w[stage - 1], w[stage - 1]);
      blk.norm = nn::LayerNorm(p + ".norm", w[stage - 1]);
      stages_[stage - 1].push_back(std::move(blk));
    }
  }
  for (int to = 1; to <= 3; ++to) {
    const std::string p = "decoder.upsample." + std::to_string(to - 1);
    ups_[to - 1].norm = nn::LayerNorm(p + ".norm", w[to]);
    ups_[to - 1].deconv = nn::PatchDeconv(p + ".deconv", w[to], w[to - 1], 2);
  }
  final_ = nn::PatchDeconv("decoder.final", w[0], 3, cfg_.encoder.patch);
}

void Decoder::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr double std = 0.02;
  for (int stage = 4; stage >= 1; --stage) {
    if (stage < 4) ups_[stage - 1].deconv.init(std, rng);
    for (auto& b : stages_[stage - 1]) b.deconv.init(std, rng);
  }
  final_.init(std, rng);
}

void Decoder::collect(nn::ParamRefs& out) {
  for (int stage = 4; stage >= 1; --stage) {
    if (stage < 4) {
      ups_[stage - 1].norm.collect(out);
      ups_[stage - 1].deconv.collect(out);
    }
    for (auto& b : stages_[stage - 1]) {
      b.deconv.collect(out);
      b.norm.collect(out);
    }
  }
  final_.collect(out);
}

FeatureMap Decoder::block_forward(const DeconvBlock& b, int stage, const FeatureMap& s,
                                  detail::DeconvBlockCache& c) const {
  c.pre_act = b.norm.forward(b.deconv.forward(s, c.deconv), c.norm);
  return nn::activate(cfg_.activation(stage), c.pre_act, cfg_.activation_param(stage));
}

Tensor Decoder::block_backward(DeconvBlock& b, int stage, const Tensor& dy,
                               const detail::DeconvBlockCache& c) {
  Tensor g = nn::activate_backward(cfg_.activation(stage), c.pre_act, dy, cfg_.activation_param(stage));
  return b.deconv.backward(b.norm.backward(g, c.norm), c.deconv);
}

FeatureMap Decoder::upsample_layer(int to_stage, const FeatureMap& h) const {
  if (to_stage < 1 || to_stage > 3) throw ConfigError("upsampling only feeds decoder stages 3..1");
  const auto& u = ups_[to_stage - 1];
  if (h.c != u.norm.channels()) {
    throw ShapeError("upsample into stage " + std::to_string(to_stage) + ": expected " +
                     std::to_string(u.norm.channels()) + " channels, got " + h.shape_str());
  }
  detail::UpsampleCache c;
  return u.deconv.forward(u.norm.forward(h, c.norm), c.deconv);
}

FeatureMap Decoder::deconv_block(const FeatureMap& skip, const FeatureMap& prev, int stage,
                                 int block) const {
  if (stage < 1 || stage > 4 || block < 0 || block >= cfg_.blocks_in_stage(stage)) {
    throw ConfigError("no deconvolution block " + std::to_string(block) + " in stage " +
                      std::to_string(stage));
  }
  if (!skip.same_shape(prev)) {
    throw ConfigError("deconvolution block " + std::to_string(block) + " of stage " +
                      std::to_string(stage) + ": skip " + skip.shape_str() + " vs input " +
                      prev.shape_str());
  }
  detail::DeconvBlockCache c;
  return block_forward(stages_[stage - 1][block], stage, add(skip, prev), c);
}

DecoderPass Decoder::decode(const FeatureMap& stage4_output, const SkipBundle& skips) const {
  const int k = cfg_.encoder.skip_count();
  if (static_cast<int>(skips.size()) != k) {
    throw ShapeError("skip bundle holds " + std::to_string(skips.size()) + " taps, decoder expects " +
                      std::to_string(k));
  }
  DecoderPass pass;
  pass.consumed.assign(k, 0);
  pass.blocks.resize(cfg_.encoder.total_blocks() + 4);
  pass.ups.resize(3);

  FeatureMap h = stage4_output;
  int tap = k;
  int bi = 0;
  for (int stage = 4; stage >= 1; --stage) {
    if (stage < 4) {
      const auto& u = ups_[stage - 1];
      auto& c = pass.ups[4 - stage - 1];
      h = u.deconv.forward(u.norm.forward(h, c.norm), c.deconv);
    }
    for (int b = 0; b < cfg_.blocks_in_stage(stage); ++b) {
      --tap;
      const SkipTap& s = skips[tap];
      if (s.stage != stage || !s.map.same_shape(h)) {
        throw ConfigError("skip tap " + std::to_string(tap) + " (stage " + std::to_string(s.stage) +
                          ", " + s.map.shape_str() + ") does not fit decoder stage " +
                          std::to_string(stage) + " input " + h.shape_str());
      }
      ++pass.consumed[tap];
      h = block_forward(stages_[stage - 1][b], stage, add(s.map, h), pass.blocks[bi++]);
    }
  }
  pass.final_pre_sigmoid = final_.forward(h, pass.final_deconv);
  pass.reconstruction = nn::activate(nn::Activation::sigmoid, pass.final_pre_sigmoid);
  return pass;
}

DecoderGrads Decoder::backward(const DecoderPass& pass, const Tensor& d_reconstruction) {
  const int k = cfg_.encoder.skip_count();
  DecoderGrads out;
  out.skips.resize(k);

  Tensor g = nn::activate_backward(nn::Activation::sigmoid, pass.final_pre_sigmoid, d_reconstruction);
  g = final_.backward(g, pass.final_deconv);

  int tap = 0;
  int bi = static_cast<int>(pass.blocks.size()) - 1;
  for (int stage = 1; stage <= 4; ++stage) {
    for (int b = cfg_.blocks_in_stage(stage) - 1; b >= 0; --b) {
      g = block_backward(stages_[stage - 1][b], stage, g, pass.blocks[bi--]);
      out.skips[tap++] = g;  // d(skip + prev) / d skip = identity
    }
    if (stage < 4) {
      auto& u = ups_[stage - 1];
      const auto& c = pass.ups[4 - stage - 1];
      g = u.norm.backward(u.deconv.backward(g, c.deconv), c.norm);
    }
  }
  out.input = std::move(g);
  return out;
}

}  // namespace jointssl
