#include "jointssl/encoder.hpp"

#include <random>

#include "jointssl/errors.hpp"

namespace jointssl {

void EncoderConfig::validate() const {
  for (int s = 0; s < 4; ++s) {
    if (stage_depths[s] < 1) throw ConfigError("stage depths must be positive");
    if (stage_widths[s] < 1) throw ConfigError("stage widths must be positive");
    if (s > 0 && stage_widths[s] <= stage_widths[s - 1]) {
      throw ConfigError("stage widths must be strictly increasing");
    }
  }
  if (dw_kernel < 1 || dw_kernel % 2 == 0) throw ConfigError("depthwise kernel must be odd");
  if (expansion < 1) throw ConfigError("expansion must be >= 1");
  if (patch < 1) throw ConfigError("patch size must be >= 1");
}

int EncoderConfig::total_blocks() const {
  return stage_depths[0] + stage_depths[1] + stage_depths[2] + stage_depths[3];
}

Encoder::Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& w = cfg_.stage_widths;
  stem_.conv = nn::PatchConv("encoder.stem.conv", 3, w[0], cfg_.patch);
  stem_.norm = nn::LayerNorm("encoder.stem.norm", w[0]);
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg_.stage_depths[s]; ++b) {
      const std::string p = "encoder.stages." + std::to_string(s) + ".blocks." + std::to_string(b);
      Block blk;
      blk.dw = nn::DepthwiseConv(p + ".dwconv", w[s], cfg_.dw_kernel);
      blk.norm = nn::LayerNorm(p + ".norm", w[s]);
      blk.pw1 = nn::Dense(p + ".pwconv1", w[s], cfg_.expansion * w[s]);
      blk.pw2 = nn::Dense(p + ".pwconv2", cfg_.expansion * w[s], w[s]);
      stages_[s].push_back(std::move(blk));
    }
  }
  for (int d = 0; d < 3; ++d) {
    const std::string p = "encoder.downsample." + std::to_string(d);
    downs_[d].norm = nn::LayerNorm(p + ".norm", w[d]);
    downs_[d].conv = nn::PatchConv(p + ".conv", w[d], w[d + 1], 2);
  }
  feature_norm_ = nn::LayerNorm("encoder.norm", w[3]);
}

void Encoder::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr double std = 0.02;
  stem_.conv.init(std, rng);
  for (int s = 0; s < 4; ++s) {
    for (auto& b : stages_[s]) {
      b.dw.init(std, rng);
      b.pw1.init(std, rng);
      b.pw2.init(std, rng);
    }
    if (s < 3) downs_[s].conv.init(std, rng);
  }
}

void Encoder::collect(nn::ParamRefs& out) {
  stem_.conv.collect(out);
  stem_.norm.collect(out);
  for (int s = 0; s < 4; ++s) {
    if (s > 0) {
      downs_[s - 1].norm.collect(out);
      downs_[s - 1].conv.collect(out);
    }
    for (auto& b : stages_[s]) {
      b.dw.collect(out);
      b.norm.collect(out);
      b.pw1.collect(out);
      b.pw2.collect(out);
    }
  }
  feature_norm_.collect(out);
}

std::size_t Encoder::parameter_count() {
  nn::ParamRefs refs;
  collect(refs);
  std::size_t n = 0;
  for (auto* p : refs) n += p->size();
  return n;
}

FeatureMap Encoder::stem_forward(const ImageTensor& x, detail::StemCache& c) const {
  if (x.c != 3) throw ShapeError("encoder input must have 3 channels, got " + x.shape_str());
  if (x.h % cfg_.patch != 0 || x.w % cfg_.patch != 0) {
    throw ShapeError("input " + x.shape_str() + " not divisible by the patchify stride " +
                     std::to_string(cfg_.patch));
  }
  return stem_.norm.forward(stem_.conv.forward(x, c.conv), c.norm);
}

FeatureMap Encoder::block_forward(const Block& b, const FeatureMap& h, detail::BlockCache& c) const {
  Tensor t = b.norm.forward(b.dw.forward(h, c.dw), c.norm);
  c.hidden = b.pw1.forward(t, c.pw1);
  Tensor out = b.pw2.forward(nn::activate(nn::Activation::gelu, c.hidden), c.pw2);
  out += h;
  return out;
}

FeatureMap Encoder::down_forward(const Downsample& d, const FeatureMap& h,
                                 detail::DownsampleCache& c) const {
  if (h.h % 2 != 0 || h.w % 2 != 0) {
    throw ShapeError("downsampling needs even spatial dims, got " + h.shape_str());
  }
  return d.conv.forward(d.norm.forward(h, c.norm), c.conv);
}

Tensor Encoder::block_backward(Block& b, const Tensor& dy, const detail::BlockCache& c) {
  Tensor g = b.pw2.backward(dy, c.pw2);
  g = nn::activate_backward(nn::Activation::gelu, c.hidden, g);
  g = b.pw1.backward(g, c.pw1);
  g = b.norm.backward(g, c.norm);
  g = b.dw.backward(g, c.dw);
  g += dy;  // residual path
  return g;
}

FeatureMap Encoder::patchify(const ImageTensor& x) const {
  detail::StemCache c;
  return stem_forward(x, c);
}

FeatureMap Encoder::convnext_block(int stage, int index, const FeatureMap& h) const {
  if (stage < 1 || stage > 4 || index < 0 || index >= cfg_.stage_depths[stage - 1]) {
    throw ConfigError("no block " + std::to_string(index) + " in stage " + std::to_string(stage));
  }
  detail::BlockCache c;
  return block_forward(stages_[stage - 1][index], h, c);
}

FeatureMap Encoder::downsample(int to_stage, const FeatureMap& h) const {
  if (to_stage < 2 || to_stage > 4) throw ConfigError("downsampling only feeds stages 2..4");
  detail::DownsampleCache c;
  return down_forward(downs_[to_stage - 2], h, c);
}

EncoderPass Encoder::encode(const ImageTensor& x) const {
  const int m = cfg_.input_multiple();
  if (x.h % m != 0 || x.w % m != 0) {
    throw ShapeError("input " + x.shape_str() + " must have sides divisible by " + std::to_string(m));
  }
  EncoderPass pass;
  pass.input_h = x.h;
  pass.input_w = x.w;
  pass.skips.reserve(cfg_.skip_count());
  pass.blocks.resize(cfg_.total_blocks());
  pass.downs.resize(3);

  FeatureMap h = stem_forward(x, pass.stem);
  pass.skips.push_back({1, SkipKind::non_residual, h});
  int bi = 0;
  for (int s = 0; s < 4; ++s) {
    if (s > 0) {
      h = down_forward(downs_[s - 1], h, pass.downs[s - 1]);
      pass.skips.push_back({s + 1, SkipKind::non_residual, h});
    }
    for (const auto& b : stages_[s]) {
      h = block_forward(b, h, pass.blocks[bi++]);
      pass.skips.push_back({s + 1, SkipKind::residual, h});
    }
  }

  Tensor pooled(1, 1, h.c);
  for (int p = 0; p < h.pixels(); ++p) {
    const double* row = h.data.data() + static_cast<std::size_t>(p) * h.c;
    for (int i = 0; i < h.c; ++i) pooled.data[i] += row[i];
  }
  for (double& v : pooled.data) v /= h.pixels();
  pass.feature = feature_norm_.forward(pooled, pass.feature_norm);
  return pass;
}

Tensor Encoder::backward(const EncoderPass& pass, std::span<const Tensor> skip_grads,
                         const Tensor& feature_grad) {
  const int k = cfg_.skip_count();
  const std::vector<Tensor> none(skip_grads.empty() ? k : 0);
  if (skip_grads.empty()) skip_grads = none;
  if (static_cast<int>(skip_grads.size()) != k || static_cast<int>(pass.skips.size()) != k) {
    throw ShapeError("encoder backward: expected " + std::to_string(k) + " skip gradients");
  }
  const FeatureMap& out = pass.stage4_output();
  Tensor g(out.h, out.w, out.c);
  if (!skip_grads[k - 1].empty()) g += skip_grads[k - 1];
  if (!feature_grad.empty()) {
    Tensor dpool = feature_norm_.backward(feature_grad, pass.feature_norm);
    const double inv = 1.0 / out.pixels();
    for (int p = 0; p < g.pixels(); ++p) {
      double* row = g.data.data() + static_cast<std::size_t>(p) * g.c;
      for (int i = 0; i < g.c; ++i) row[i] += dpool.data[i] * inv;
    }
  }

  // Walk the production order backwards; tap i is the output of unit i.
  int tap = k - 1;
  int bi = cfg_.total_blocks() - 1;
  auto merge_tap = [&](Tensor dx) {
    --tap;
    if (!skip_grads[tap].empty()) dx += skip_grads[tap];
    g = std::move(dx);
  };
  for (int s = 3; s >= 0; --s) {
    for (int b = cfg_.stage_depths[s] - 1; b >= 0; --b) {
      merge_tap(block_backward(stages_[s][b], g, pass.blocks[bi--]));
    }
    if (s > 0) {
      auto& d = downs_[s - 1];
      const auto& c = pass.downs[s - 1];
      merge_tap(d.norm.backward(d.conv.backward(g, c.conv), c.norm));
    }
  }
  return stem_.conv.backward(stem_.norm.backward(g, pass.stem.norm), pass.stem.conv);
}

}  // namespace jointssl
