#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "unsuperpoint/core/image.hpp"
#include "unsuperpoint/core/rng.hpp"
#include "unsuperpoint/siamese/photometric.hpp"

namespace testutil {

// Central finite difference of a scalar function at x.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Relative error with an absolute floor so near-zero gradients compare
// on an absolute scale.
inline double rel_error(double got, double want, double floor = 1e-6) {
  double denom = std::max({std::abs(got), std::abs(want), floor});
  return std::abs(got - want) / denom;
}

// Synthetic image with enough structure for detector training: random
// polygons, ellipses, lines and a checkerboard patch on a gradient
// background, lightly blurred.
inline unsuperpoint::Image synthetic_image(int h, int w, std::uint64_t seed) {
  using unsuperpoint::Image;
  unsuperpoint::Rng rng(seed);
  Image img(h, w, 3);
  float gx = static_cast<float>(rng.uniform(0.2, 0.8));
  float gy = static_cast<float>(rng.uniform(0.2, 0.8));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float base = 0.25f + 0.5f * (gx * x / w + gy * y / h) / (gx + gy);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = base;
    }

  auto fill_rect = [&](int cx, int cy, int rw, int rh, double angle, const float* color) {
    double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = std::max(0, cy - rh - rw); y < std::min(h, cy + rh + rw); ++y)
      for (int x = std::max(0, cx - rw - rh); x < std::min(w, cx + rw + rh); ++x) {
        double dx = x - cx, dy = y - cy;
        double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
        if (std::abs(u) <= rw && std::abs(v) <= rh)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
      }
  };
  auto fill_ellipse = [&](int cx, int cy, int rx, int ry, const float* color) {
    for (int y = std::max(0, cy - ry); y < std::min(h, cy + ry + 1); ++y)
      for (int x = std::max(0, cx - rx); x < std::min(w, cx + rx + 1); ++x) {
        double dx = (x - cx) / static_cast<double>(rx), dy = (y - cy) / static_cast<double>(ry);
        if (dx * dx + dy * dy <= 1.0)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
      }
  };

  int num_shapes = 6 + static_cast<int>(rng.uniform_int(6));
  for (int s = 0; s < num_shapes; ++s) {
    float color[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                      static_cast<float>(rng.uniform())};
    int cx = static_cast<int>(rng.uniform_int(w)), cy = static_cast<int>(rng.uniform_int(h));
    switch (rng.uniform_int(3)) {
      case 0:
        fill_rect(cx, cy, 3 + static_cast<int>(rng.uniform_int(w / 5)),
                  3 + static_cast<int>(rng.uniform_int(h / 5)), rng.uniform(0, 3.14), color);
        break;
      case 1:
        fill_ellipse(cx, cy, 3 + static_cast<int>(rng.uniform_int(w / 6)),
                     3 + static_cast<int>(rng.uniform_int(h / 6)), color);
        break;
      default: {
        // thick line
        double angle = rng.uniform(0, 3.14);
        int len = 10 + static_cast<int>(rng.uniform_int(w / 2));
        fill_rect(cx, cy, len / 2, 1 + static_cast<int>(rng.uniform_int(2)), angle, color);
        break;
      }
    }
  }
  // checkerboard patch
  {
    int cell = 4 + static_cast<int>(rng.uniform_int(5));
    int bx = static_cast<int>(rng.uniform_int(std::max(1, w / 2)));
    int by = static_cast<int>(rng.uniform_int(std::max(1, h / 2)));
    int bw = std::min(w - bx, cell * 6), bh = std::min(h - by, cell * 6);
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x) {
        float v = (((x / cell) + (y / cell)) % 2) ? 0.9f : 0.1f;
        for (int c = 0; c < 3; ++c) img.at(by + y, bx + x, c) = v;
      }
  }
  img = unsuperpoint::gaussian_blur(img, 0.6);
  img.clamp01();
  return img;
}

}  // namespace testutil
