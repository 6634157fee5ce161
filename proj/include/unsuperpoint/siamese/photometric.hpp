#pragma once

#include <cmath>
#include <vector>

#include "unsuperpoint/core/image.hpp"
#include "unsuperpoint/core/rng.hpp"

namespace unsuperpoint {

// Non-spatial augmentation intervals; each application samples a
// magnitude uniformly within [0 or -max, max].
struct PhotometricParams {
  double brightness_max = 0.2;   // additive shift, unit range
  double blur_sigma_max = 1.5;   // px
  double noise_sigma_max = 0.04; // additive gaussian, unit range

  static PhotometricParams none() { return {0.0, 0.0, 0.0}; }
};

inline Image gaussian_blur(const Image& src, double sigma) {
  if (sigma < 1e-3) return src;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (float& k : kernel) k = static_cast<float>(k / sum);

  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  Image tmp(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * src.at(y, clampi(x + i, 0, src.width - 1), c);
        tmp.at(y, x, c) = acc;
      }
  Image out(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[i + radius] * tmp.at(clampi(y + i, 0, src.height - 1), x, c);
        out.at(y, x, c) = acc;
      }
  return out;
}

// Brightness shift, gaussian blur, additive gaussian noise, in that
// order; result clipped to [0, 1].
inline Image apply_photometric(const Image& image, double brightness, double blur_sigma,
                               double noise_sigma, Rng& rng) {
  Image out = image;
  if (brightness != 0.0)
    for (float& v : out.data) v += static_cast<float>(brightness);
  out = gaussian_blur(out, blur_sigma);
  if (noise_sigma > 0.0)
    for (float& v : out.data) v += static_cast<float>(noise_sigma * rng.normal());
  out.clamp01();
  return out;
}

// Magnitudes sampled uniformly within the configured intervals;
// deterministic for a fixed seed.
inline Image photometric_augment(const Image& image, const PhotometricParams& params,
                                 std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x70686f74ULL));
  double brightness = rng.uniform(-params.brightness_max, params.brightness_max);
  double blur_sigma = rng.uniform(0.0, params.blur_sigma_max);
  double noise_sigma = rng.uniform(0.0, params.noise_sigma_max);
  return apply_photometric(image, brightness, blur_sigma, noise_sigma, rng);
}

}  // namespace unsuperpoint
