#pragma once

#include <json.hpp>

#include "jointssl/random.hpp"
#include "jointssl/tensor.hpp"

namespace jointssl {

/// Random geometric and intensity transformations producing the second view
/// x' of a sample. Geometry runs first (one bilinear warp with reflect
/// padding, then flips), intensity second, and the result is clamped to [0, 1].
struct SimilarityTransformConfig {
  double rotation_deg = 120.0;  // angle ~ U(-rotation_deg, +rotation_deg), always applied

  double shift_h = 0.2;  // fraction of the width
  double shift_v = 0.3;  // fraction of the height
  double shift_p = 0.7;

  double scale_min = 0.8;
  double scale_max = 0.9;
  double scale_p = 0.7;

  double hflip_p = 0.5;
  double vflip_p = 0.5;

  /// Shared lower limit of the saturation and brightness factor ranges.
  double sat_bright_min = 0.6;
  double saturation_max = 2.6;
  double saturation_p = 0.6;
  double brightness_max = 2.8;
  double brightness_p = 0.7;

  /// Throws ConfigError if a probability leaves [0, 1] or a range is empty.
  void validate() const;

  /// Every transformation disabled; similarity_transform returns its input.
  static SimilarityTransformConfig identity();
};

/// Additive Gaussian noise zeta ~ N(mean, std^2).
struct NoiseSpec {
  double mean = 0.0;
  double std = 0.1;

  void validate() const;
};

ImageTensor similarity_transform(const ImageTensor& x, const SimilarityTransformConfig& cfg, Rng& rng);

/// x + zeta, not clamped. std == 0 and mean == 0 returns an exact copy without
/// touching the generator.
ImageTensor add_gaussian_noise(const ImageTensor& x, const NoiseSpec& spec, Rng& rng);

// Building blocks, exposed for tests and for unlabeled-pool rotation.

/// Inverse-mapped affine warp about the image centre: output pixel p samples
/// the input at centre + A^-1 (p - centre - t). Bilinear, reflect padding.
ImageTensor warp_affine(const ImageTensor& x, double angle_deg, double scale, double shift_x,
                        double shift_y);
inline ImageTensor rotate(const ImageTensor& x, double angle_deg) {
  return warp_affine(x, angle_deg, 1.0, 0.0, 0.0);
}
ImageTensor flip_horizontal(const ImageTensor& x);
ImageTensor flip_vertical(const ImageTensor& x);
/// Blend with the luma image: gray + f (x - gray), clamped.
ImageTensor adjust_saturation(const ImageTensor& x, double factor);
/// f x, clamped.
ImageTensor adjust_brightness(const ImageTensor& x, double factor);

nlohmann::json to_json(const SimilarityTransformConfig& cfg);

}  // namespace jointssl
