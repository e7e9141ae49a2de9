#include "jointssl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jointssl/errors.hpp"

namespace jointssl {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(name) + " must be a probability in [0, 1], got " + std::to_string(p));
  }
}

void check_range(double lo, double hi, const char* name) {
  if (!(lo < hi)) {
    throw ConfigError(std::string(name) + " range is empty: [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
}

// Reflect a continuous coordinate into [0, n-1] (mirror about the edge pixel
// centres, no edge repeat).
double reflect(double v, int n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  v = std::fmod(std::abs(v), period);
  return v > n - 1 ? period - v : v;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

bool coin(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

void SimilarityTransformConfig::validate() const {
  if (!(rotation_deg >= 0.0)) throw ConfigError("rotation range must be non-negative");
  if (!(shift_h >= 0.0 && shift_v >= 0.0)) throw ConfigError("shift factors must be non-negative");
  check_probability(shift_p, "shift probability");
  check_probability(scale_p, "scale probability");
  check_probability(hflip_p, "horizontal flip probability");
  check_probability(vflip_p, "vertical flip probability");
  check_probability(saturation_p, "saturation probability");
  check_probability(brightness_p, "brightness probability");
  if (scale_p > 0.0) check_range(scale_min, scale_max, "scale");
  if (saturation_p > 0.0) check_range(sat_bright_min, saturation_max, "saturation");
  if (brightness_p > 0.0) check_range(sat_bright_min, brightness_max, "brightness");
  if (scale_min <= 0.0) throw ConfigError("scale factors must be positive");
  if (sat_bright_min < 0.0) throw ConfigError("intensity factors must be non-negative");
}

SimilarityTransformConfig SimilarityTransformConfig::identity() {
  SimilarityTransformConfig c;
  c.rotation_deg = 0.0;
  c.shift_p = 0.0;
  c.scale_p = 0.0;
  c.hflip_p = 0.0;
  c.vflip_p = 0.0;
  c.saturation_p = 0.0;
  c.brightness_p = 0.0;
  return c;
}

void NoiseSpec::validate() const {
  if (!(std >= 0.0) || !std::isfinite(std)) throw ConfigError("noise std must be >= 0");
  if (!std::isfinite(mean)) throw ConfigError("noise mean must be finite");
}

ImageTensor warp_affine(const ImageTensor& x, double angle_deg, double scale, double shift_x,
                        double shift_y) {
  if (angle_deg == 0.0 && scale == 1.0 && shift_x == 0.0 && shift_y == 0.0) return x;
  const double cx = 0.5 * (x.w - 1);
  const double cy = 0.5 * (x.h - 1);
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(a) / scale;
  const double sn = std::sin(a) / scale;
  ImageTensor y(x.h, x.w, x.c);
  for (int oy = 0; oy < x.h; ++oy) {
    for (int ox = 0; ox < x.w; ++ox) {
      const double dx = ox - cx - shift_x;
      const double dy = oy - cy - shift_y;
      const double sx = reflect(cx + cs * dx + sn * dy, x.w);
      const double sy = reflect(cy - sn * dx + cs * dy, x.h);
      const int x0 = std::min(static_cast<int>(sx), x.w - 1);
      const int y0 = std::min(static_cast<int>(sy), x.h - 1);
      const int x1 = std::min(x0 + 1, x.w - 1);
      const int y1 = std::min(y0 + 1, x.h - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      const double* p00 = x.pixel(y0, x0);
      const double* p01 = x.pixel(y0, x1);
      const double* p10 = x.pixel(y1, x0);
      const double* p11 = x.pixel(y1, x1);
      double* out = y.pixel(oy, ox);
      for (int c = 0; c < x.c; ++c) {
        // lerp form keeps constant regions bit-exact
        const double top = p00[c] + fx * (p01[c] - p00[c]);
        const double bot = p10[c] + fx * (p11[c] - p10[c]);
        out[c] = top + fy * (bot - top);
      }
    }
  }
  return y;
}

ImageTensor flip_horizontal(const ImageTensor& x) {
  ImageTensor y(x.h, x.w, x.c);
  for (int r = 0; r < x.h; ++r) {
    for (int col = 0; col < x.w; ++col) {
      std::copy_n(x.pixel(r, x.w - 1 - col), x.c, y.pixel(r, col));
    }
  }
  return y;
}

ImageTensor flip_vertical(const ImageTensor& x) {
  ImageTensor y(x.h, x.w, x.c);
  for (int r = 0; r < x.h; ++r) std::copy_n(x.pixel(x.h - 1 - r, 0), x.w * x.c, y.pixel(r, 0));
  return y;
}

ImageTensor adjust_saturation(const ImageTensor& x, double factor) {
  if (x.c != 3) throw ShapeError("saturation needs an RGB image, got " + x.shape_str());
  ImageTensor y(x.h, x.w, 3);
  for (int p = 0; p < x.pixels(); ++p) {
    const double* in = x.data.data() + 3 * static_cast<std::size_t>(p);
    double* out = y.data.data() + 3 * static_cast<std::size_t>(p);
    const double gray = 0.299 * in[0] + 0.587 * in[1] + 0.114 * in[2];
    for (int c = 0; c < 3; ++c) out[c] = clamp01(gray + factor * (in[c] - gray));
  }
  return y;
}

ImageTensor adjust_brightness(const ImageTensor& x, double factor) {
  ImageTensor y(x.h, x.w, x.c);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = clamp01(factor * x.data[i]);
  return y;
}

ImageTensor similarity_transform(const ImageTensor& x, const SimilarityTransformConfig& cfg, Rng& rng) {
  // Every random decision is drawn unconditionally and in a fixed order so the
  // stream position after a call does not depend on which branches fired.
  const double angle = cfg.rotation_deg > 0.0 ? uniform(rng, -cfg.rotation_deg, cfg.rotation_deg) : 0.0;
  const bool do_shift = coin(rng, cfg.shift_p);
  const double tx = uniform(rng, -1.0, 1.0) * cfg.shift_h * x.w;
  const double ty = uniform(rng, -1.0, 1.0) * cfg.shift_v * x.h;
  const bool do_scale = coin(rng, cfg.scale_p);
  const double s = cfg.scale_p > 0.0 ? uniform(rng, cfg.scale_min, cfg.scale_max) : 1.0;
  const bool hflip = coin(rng, cfg.hflip_p);
  const bool vflip = coin(rng, cfg.vflip_p);
  const bool do_sat = coin(rng, cfg.saturation_p);
  const double sat = cfg.saturation_p > 0.0 ? uniform(rng, cfg.sat_bright_min, cfg.saturation_max) : 1.0;
  const bool do_bright = coin(rng, cfg.brightness_p);
  const double bright =
      cfg.brightness_p > 0.0 ? uniform(rng, cfg.sat_bright_min, cfg.brightness_max) : 1.0;

  ImageTensor y = warp_affine(x, angle, do_scale ? s : 1.0, do_shift ? tx : 0.0, do_shift ? ty : 0.0);
  if (hflip) y = flip_horizontal(y);
  if (vflip) y = flip_vertical(y);
  if (do_sat) y = adjust_saturation(y, sat);
  if (do_bright) y = adjust_brightness(y, bright);
  for (double& v : y.data) v = clamp01(v);
  return y;
}

ImageTensor add_gaussian_noise(const ImageTensor& x, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  ImageTensor y = x;
  if (spec.std == 0.0) {
    if (spec.mean != 0.0) {
      for (double& v : y.data) v += spec.mean;
    }
    return y;
  }
  std::normal_distribution<double> dist(spec.mean, spec.std);
  for (double& v : y.data) v += dist(rng);
  return y;
}

nlohmann::json to_json(const SimilarityTransformConfig& c) {
  return {{"rotation_deg", c.rotation_deg},     {"shift_h", c.shift_h},
          {"shift_v", c.shift_v},               {"shift_p", c.shift_p},
          {"scale_min", c.scale_min},           {"scale_max", c.scale_max},
          {"scale_p", c.scale_p},               {"hflip_p", c.hflip_p},
          {"vflip_p", c.vflip_p},               {"sat_bright_min", c.sat_bright_min},
          {"saturation_max", c.saturation_max}, {"saturation_p", c.saturation_p},
          {"brightness_max", c.brightness_max}, {"brightness_p", c.brightness_p},
          {"interpolation", "bilinear"},        {"padding", "reflect"},
          {"order", "geometric,intensity,noise"}};
}

}  // namespace jointssl
