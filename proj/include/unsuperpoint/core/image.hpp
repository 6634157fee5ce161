#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace unsuperpoint {

// Interleaved float image, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, float value = 0.f)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, value) {}

  bool empty() const { return data.empty(); }

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  float* pixel(int y, int x) { return &data[(static_cast<std::size_t>(y) * width + x) * channels]; }
  const float* pixel(int y, int x) const {
    return &data[(static_cast<std::size_t>(y) * width + x) * channels];
  }

  // Bilinear sample at continuous pixel position; outside pixels read as 0.
  float sample_bilinear(double x, double y, int c) const {
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    double fx = x - x0, fy = y - y0;
    auto tap = [&](int yy, int xx) -> double {
      if (xx < 0 || xx >= width || yy < 0 || yy >= height) return 0.0;
      return at(yy, xx, c);
    };
    double v = tap(y0, x0) * (1 - fx) * (1 - fy) + tap(y0, x0 + 1) * fx * (1 - fy) +
               tap(y0 + 1, x0) * (1 - fx) * fy + tap(y0 + 1, x0 + 1) * fx * fy;
    return static_cast<float>(v);
  }

  void clamp01() {
    for (float& v : data) v = std::min(1.f, std::max(0.f, v));
  }

  Image to_gray() const {
    if (channels == 1) return *this;
    Image g(height, width, 1);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const float* p = pixel(y, x);
        g.at(y, x, 0) = 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2];
      }
    return g;
  }

  Image to_rgb() const {
    if (channels == 3) return *this;
    Image rgb(height, width, 3);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        float v = at(y, x, 0);
        float* p = rgb.pixel(y, x);
        p[0] = p[1] = p[2] = v;
      }
    return rgb;
  }
};

// Bilinear resize to (out_h, out_w); align-corners-free convention so
// downscales average evenly.
inline Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (src.empty()) throw std::invalid_argument("resize_bilinear: empty image");
  if (out_h == src.height && out_w == src.width) return src;
  Image dst(out_h, out_w, src.channels);
  double sy = static_cast<double>(src.height) / out_h;
  double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int ya = std::clamp(y0, 0, src.height - 1);
    int yb = std::clamp(y0 + 1, 0, src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int xa = std::clamp(x0, 0, src.width - 1);
      int xb = std::clamp(x0 + 1, 0, src.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        double v = src.at(ya, xa, c) * (1 - wx) * (1 - wy) + src.at(ya, xb, c) * wx * (1 - wy) +
                   src.at(yb, xa, c) * (1 - wx) * wy + src.at(yb, xb, c) * wx * wy;
        dst.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return dst;
}

}  // namespace unsuperpoint
