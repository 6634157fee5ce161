#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "unsuperpoint/core/tensor.hpp"
#include "unsuperpoint/geometry/homography.hpp"
#include "unsuperpoint/model/network.hpp"

namespace unsuperpoint {

// Aligned score/position/descriptor rows for one image, sorted by
// descending score (stable, so ties keep row-major cell order).
struct PointSet {
  std::vector<double> scores;
  PointArray positions;        // pixel coords, x then y
  Tensor<double> descriptors;  // M x F
  std::vector<int> cell_index; // sorted row -> original cell (row-major)
  int source_h = 0, source_w = 0;

  std::size_t size() const { return scores.size(); }

  PointSet head(std::size_t n) const {
    n = std::min(n, size());
    PointSet out;
    out.source_h = source_h;
    out.source_w = source_w;
    out.scores.assign(scores.begin(), scores.begin() + n);
    out.positions.assign(positions.begin(), positions.begin() + n);
    out.cell_index.assign(cell_index.begin(), cell_index.begin() + n);
    const std::size_t f = descriptors.size() ? descriptors.dim(1) : 0;
    out.descriptors.resize({n, f});
    if (f) std::copy(descriptors.data(), descriptors.data() + n * f, out.descriptors.data());
    return out;
  }
};

// P_map(r, c) = ((c + rel_x) * f, (r + rel_y) * f)
template <typename T>
inline void relative_to_pixel(const T* rel, int hc, int wc, int f_downsample, T* pixel) {
  std::size_t m = static_cast<std::size_t>(hc) * wc;
  for (std::size_t i = 0; i < m; ++i) {
    int r = static_cast<int>(i) / wc, c = static_cast<int>(i) % wc;
    pixel[2 * i] = (static_cast<T>(c) + rel[2 * i]) * static_cast<T>(f_downsample);
    pixel[2 * i + 1] = (static_cast<T>(r) + rel[2 * i + 1]) * static_cast<T>(f_downsample);
  }
}

template <typename T>
struct InterpolationCache {
  // per point: the 4 source cells, bilinear fractions and whether the
  // position gradient is live (0 when clamped at the border)
  std::vector<std::array<int, 4>> cells;  // c00, c01, c10, c11 (row-major cell ids)
  std::vector<T> fx, fy;
  std::vector<T> dfx_du, dfy_dv;
};

// Bilinear interpolation of the descriptor map at pixel positions. Cell
// (r, c) is anchored at pixel center ((c + 0.5) * f, (r + 0.5) * f);
// border positions clamp to edge cells. Differentiable in both the map
// and the positions.
template <typename T>
inline Tensor<T> interpolate_descriptors(const Tensor<T>& desc_map, int hc, int wc,
                                         const T* positions, std::size_t m, int f_downsample,
                                         InterpolationCache<T>* cache = nullptr) {
  const int f = static_cast<int>(desc_map.size() / (static_cast<std::size_t>(hc) * wc));
  Tensor<T> out({m, static_cast<std::size_t>(f)});
  if (cache) {
    cache->cells.resize(m);
    cache->fx.resize(m);
    cache->fy.resize(m);
    cache->dfx_du.resize(m);
    cache->dfy_dv.resize(m);
  }
  const T fd = static_cast<T>(f_downsample);
  for (std::size_t i = 0; i < m; ++i) {
    T u = positions[2 * i] / fd - T(0.5);
    T v = positions[2 * i + 1] / fd - T(0.5);
    T u_cl = std::min(std::max(u, T(0)), static_cast<T>(wc - 1));
    T v_cl = std::min(std::max(v, T(0)), static_cast<T>(hc - 1));
    int c0 = wc > 1 ? std::min(static_cast<int>(std::floor(u_cl)), wc - 2) : 0;
    int r0 = hc > 1 ? std::min(static_cast<int>(std::floor(v_cl)), hc - 2) : 0;
    int c1 = std::min(c0 + 1, wc - 1), r1 = std::min(r0 + 1, hc - 1);
    T fx = u_cl - static_cast<T>(c0), fy = v_cl - static_cast<T>(r0);
    const T* d00 = desc_map.data() + (static_cast<std::size_t>(r0) * wc + c0) * f;
    const T* d01 = desc_map.data() + (static_cast<std::size_t>(r0) * wc + c1) * f;
    const T* d10 = desc_map.data() + (static_cast<std::size_t>(r1) * wc + c0) * f;
    const T* d11 = desc_map.data() + (static_cast<std::size_t>(r1) * wc + c1) * f;
    T* o = out.data() + i * f;
    T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy), w10 = (T(1) - fx) * fy,
      w11 = fx * fy;
    for (int j = 0; j < f; ++j) o[j] = w00 * d00[j] + w01 * d01[j] + w10 * d10[j] + w11 * d11[j];
    if (cache) {
      cache->cells[i] = {r0 * wc + c0, r0 * wc + c1, r1 * wc + c0, r1 * wc + c1};
      cache->fx[i] = fx;
      cache->fy[i] = fy;
      cache->dfx_du[i] = (u >= T(0) && u <= static_cast<T>(wc - 1)) ? T(1) : T(0);
      cache->dfy_dv[i] = (v >= T(0) && v <= static_cast<T>(hc - 1)) ? T(1) : T(0);
    }
  }
  return out;
}

// Backward of interpolate_descriptors: scatters into ddesc_map and adds
// the position gradient into dpositions.
template <typename T>
inline void interpolate_descriptors_backward(const Tensor<T>& desc_map, int wc,
                                             const InterpolationCache<T>& cache,
                                             const Tensor<T>& dout, int f_downsample,
                                             Tensor<T>& ddesc_map, T* dpositions) {
  const std::size_t m = cache.cells.size();
  const int f = static_cast<int>(dout.dim(1));
  const T fd = static_cast<T>(f_downsample);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& cells = cache.cells[i];
    T fx = cache.fx[i], fy = cache.fy[i];
    const T* g = dout.data() + i * f;
    T w00 = (T(1) - fx) * (T(1) - fy), w01 = fx * (T(1) - fy), w10 = (T(1) - fx) * fy,
      w11 = fx * fy;
    T* m00 = ddesc_map.data() + static_cast<std::size_t>(cells[0]) * f;
    T* m01 = ddesc_map.data() + static_cast<std::size_t>(cells[1]) * f;
    T* m10 = ddesc_map.data() + static_cast<std::size_t>(cells[2]) * f;
    T* m11 = ddesc_map.data() + static_cast<std::size_t>(cells[3]) * f;
    const T* d00 = desc_map.data() + static_cast<std::size_t>(cells[0]) * f;
    const T* d01 = desc_map.data() + static_cast<std::size_t>(cells[1]) * f;
    const T* d10 = desc_map.data() + static_cast<std::size_t>(cells[2]) * f;
    const T* d11 = desc_map.data() + static_cast<std::size_t>(cells[3]) * f;
    T du = T(0), dv = T(0);
    for (int j = 0; j < f; ++j) {
      T gj = g[j];
      m00[j] += w00 * gj;
      m01[j] += w01 * gj;
      m10[j] += w10 * gj;
      m11[j] += w11 * gj;
      // d value / d fx = (1-fy)(d01-d00) + fy(d11-d10); likewise for fy
      du += gj * ((T(1) - fy) * (d01[j] - d00[j]) + fy * (d11[j] - d10[j]));
      dv += gj * ((T(1) - fx) * (d10[j] - d00[j]) + fx * (d11[j] - d01[j]));
    }
    if (dpositions) {
      dpositions[2 * i] += du * cache.dfx_du[i] / fd;
      dpositions[2 * i + 1] += dv * cache.dfy_dv[i] / fd;
    }
  }
}

// Full per-image point view in cell (row-major) order, with everything
// the backward pass needs. Training operates on this directly; the
// sorted PointSet is built on top for inference and evaluation.
template <typename T>
struct ImagePoints {
  int hc = 0, wc = 0, f = 0;
  int source_h = 0, source_w = 0;
  std::vector<T> scores;     // M
  std::vector<T> rel;        // M x 2
  std::vector<T> positions;  // M x 2, pixel coords
  Tensor<T> descriptors;     // M x F, row-normalized when configured
  // caches for backward
  Tensor<T> raw_descriptors;  // pre-normalization
  Tensor<T> desc_map_slice;   // this image's descriptor map, M x F
  std::vector<T> desc_norm;
  InterpolationCache<T> interp;
  bool normalized = false;

  std::size_t size() const { return scores.size(); }
};

template <typename T>
inline ImagePoints<T> extract_image_points(const RawHeads<T>& heads, int image_index,
                                           const ModelConfig& config, bool with_cache) {
  ImagePoints<T> pts;
  pts.hc = heads.hc;
  pts.wc = heads.wc;
  pts.f = heads.descriptor_dim;
  pts.source_h = heads.hc * config.downsample_factor;
  pts.source_w = heads.wc * config.downsample_factor;
  const std::size_t m = heads.cells();
  const std::size_t off = static_cast<std::size_t>(image_index) * m;

  pts.scores.assign(heads.scores.data() + off, heads.scores.data() + off + m);
  pts.rel.assign(heads.relative.data() + 2 * off, heads.relative.data() + 2 * off + 2 * m);
  pts.positions.resize(2 * m);
  relative_to_pixel(pts.rel.data(), pts.hc, pts.wc, config.downsample_factor,
                    pts.positions.data());

  pts.desc_map_slice.resize({m, static_cast<std::size_t>(pts.f)});
  std::copy(heads.desc_map.data() + off * pts.f, heads.desc_map.data() + (off + m) * pts.f,
            pts.desc_map_slice.data());
  pts.raw_descriptors =
      interpolate_descriptors(pts.desc_map_slice, pts.hc, pts.wc, pts.positions.data(), m,
                              config.downsample_factor, with_cache ? &pts.interp : nullptr);

  pts.normalized = config.normalize_descriptors;
  if (pts.normalized) {
    pts.descriptors.resize({m, static_cast<std::size_t>(pts.f)});
    pts.desc_norm.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const T* r = pts.raw_descriptors.data() + i * pts.f;
      T* o = pts.descriptors.data() + i * pts.f;
      T norm = T(0);
      for (int j = 0; j < pts.f; ++j) norm += r[j] * r[j];
      norm = std::sqrt(std::max(norm, T(1e-24)));
      pts.desc_norm[i] = norm;
      for (int j = 0; j < pts.f; ++j) o[j] = r[j] / norm;
    }
  } else {
    pts.descriptors = pts.raw_descriptors;
  }
  if (!with_cache) {
    pts.raw_descriptors = Tensor<T>();
    pts.desc_map_slice = Tensor<T>();
  }
  return pts;
}

// Per-image gradients w.r.t. the point view; backward routes them into
// head-map gradient tensors for the owning batch.
template <typename T>
struct ImagePointGrads {
  std::vector<T> dscores;      // M
  std::vector<T> dpositions;   // M x 2, pixel coords
  std::vector<T> drel;         // M x 2, direct contributions (uniform loss)
  Tensor<T> ddescriptors;      // M x F (w.r.t. normalized rows)

  explicit ImagePointGrads(std::size_t m, int f)
      : dscores(m, T(0)), dpositions(2 * m, T(0)), drel(2 * m, T(0)),
        ddescriptors({m, static_cast<std::size_t>(f)}) {}
};

template <typename T>
inline void image_points_backward(const ImagePoints<T>& pts, const ImagePointGrads<T>& grads,
                                  int image_index, const ModelConfig& config,
                                  Tensor<T>& dscores_map, Tensor<T>& drelative_map,
                                  Tensor<T>& ddesc_map) {
  const std::size_t m = pts.size();
  const std::size_t off = static_cast<std::size_t>(image_index) * m;
  const int f = pts.f;

  // descriptor normalization backward
  Tensor<T> draw({m, static_cast<std::size_t>(f)});
  if (pts.normalized) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* fh = pts.descriptors.data() + i * f;
      const T* g = grads.ddescriptors.data() + i * f;
      T dot = T(0);
      for (int j = 0; j < f; ++j) dot += fh[j] * g[j];
      T inv_norm = T(1) / pts.desc_norm[i];
      T* o = draw.data() + i * f;
      for (int j = 0; j < f; ++j) o[j] = (g[j] - fh[j] * dot) * inv_norm;
    }
  } else {
    draw = grads.ddescriptors;
  }

  // interpolation backward: descriptor-map gradient + position term
  Tensor<T> dmap_slice({m, static_cast<std::size_t>(f)});
  std::vector<T> dpos = grads.dpositions;
  interpolate_descriptors_backward(pts.desc_map_slice, pts.wc, pts.interp, draw,
                                   config.downsample_factor, dmap_slice, dpos.data());
  for (std::size_t i = 0; i < m * f; ++i) ddesc_map[off * f + i] += dmap_slice[i];

  // positions -> relative (x = (c + rel_x) * f)
  const T fd = static_cast<T>(config.downsample_factor);
  for (std::size_t i = 0; i < 2 * m; ++i)
    drelative_map[2 * off + i] += dpos[i] * fd + grads.drel[i];
  for (std::size_t i = 0; i < m; ++i) dscores_map[off + i] += grads.dscores[i];
}

// Flattens, sorts by descending score (stable on ties) and converts to
// the double-precision point set used by evaluation and IO.
template <typename T>
inline PointSet assemble_pointset(const RawHeads<T>& heads, int image_index,
                                  const ModelConfig& config) {
  ImagePoints<T> pts = extract_image_points(heads, image_index, config, /*with_cache=*/false);
  const std::size_t m = pts.size();
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pts.scores[a] > pts.scores[b]; });

  PointSet out;
  out.source_h = pts.source_h;
  out.source_w = pts.source_w;
  out.scores.resize(m);
  out.positions.resize(m);
  out.cell_index.assign(order.begin(), order.end());
  out.descriptors.resize({m, static_cast<std::size_t>(pts.f)});
  for (std::size_t i = 0; i < m; ++i) {
    int src = order[i];
    out.scores[i] = static_cast<double>(pts.scores[src]);
    out.positions[i] =
        Vec2d(static_cast<double>(pts.positions[2 * src]), static_cast<double>(pts.positions[2 * src + 1]));
    const T* d = pts.descriptors.data() + static_cast<std::size_t>(src) * pts.f;
    double* o = out.descriptors.data() + i * pts.f;
    for (int j = 0; j < pts.f; ++j) o[j] = static_cast<double>(d[j]);
  }
  return out;
}

}  // namespace unsuperpoint
