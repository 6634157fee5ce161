#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "unsuperpoint/core/tensor.hpp"

namespace unsuperpoint {

// All feature maps are channels-last {N, H, W, C}. Convolutions are 3x3,
// stride 1, zero padding 1 (spatial size preserved), lowered to GEMM via
// im2col with patch layout (H*W) x (9*C_in) so channel runs stay
// contiguous copies.

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // {9 * c_in, c_out}
  Tensor<T> bias;    // {c_out}
  Tensor<T> grad_weight;
  Tensor<T> grad_bias;
  int c_in = 0, c_out = 0;

  void init_shapes(int in, int out) {
    c_in = in;
    c_out = out;
    weight.resize({static_cast<std::size_t>(9 * in), static_cast<std::size_t>(out)});
    bias.resize({static_cast<std::size_t>(out)});
    grad_weight.resize(weight.dims());
    grad_bias.resize(bias.dims());
  }
};

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma, beta;
  Tensor<T> grad_gamma, grad_beta;
  Tensor<T> running_mean, running_var;
  int channels = 0;
  T momentum = T(0.1);
  T eps = T(1e-5);

  void init_shapes(int c) {
    channels = c;
    gamma.resize({static_cast<std::size_t>(c)});
    gamma.fill(T(1));
    beta.resize({static_cast<std::size_t>(c)});
    grad_gamma.resize(gamma.dims());
    grad_beta.resize(beta.dims());
    running_mean.resize({static_cast<std::size_t>(c)});
    running_var.resize({static_cast<std::size_t>(c)});
    running_var.fill(T(1));
  }
};

// ---------------------------------------------------------------------------
// im2col / col2im

template <typename T>
inline void im2col_3x3(const T* src, int h, int w, int c, T* cols) {
  // cols: (h*w) x (9*c); tap order (ky, kx) row-major
  const int k = 9 * c;
  for (int y = 0; y < h; ++y) {
    for (int tap = 0; tap < 9; ++tap) {
      int ky = tap / 3 - 1, kx = tap % 3 - 1;
      int sy = y + ky;
      T* dst_row = cols + (static_cast<std::size_t>(y) * w) * k + tap * c;
      if (sy < 0 || sy >= h) {
        for (int x = 0; x < w; ++x) std::memset(dst_row + static_cast<std::size_t>(x) * k, 0, sizeof(T) * c);
        continue;
      }
      const T* src_row = src + (static_cast<std::size_t>(sy) * w) * c;
      for (int x = 0; x < w; ++x) {
        int sx = x + kx;
        T* d = dst_row + static_cast<std::size_t>(x) * k;
        if (sx < 0 || sx >= w)
          std::memset(d, 0, sizeof(T) * c);
        else
          std::memcpy(d, src_row + static_cast<std::size_t>(sx) * c, sizeof(T) * c);
      }
    }
  }
}

template <typename T>
inline void col2im_3x3_accumulate(const T* cols, int h, int w, int c, T* dst) {
  const int k = 9 * c;
  for (int y = 0; y < h; ++y) {
    for (int tap = 0; tap < 9; ++tap) {
      int ky = tap / 3 - 1, kx = tap % 3 - 1;
      int sy = y + ky;
      if (sy < 0 || sy >= h) continue;
      const T* col_row = cols + (static_cast<std::size_t>(y) * w) * k + tap * c;
      T* dst_row = dst + (static_cast<std::size_t>(sy) * w) * c;
      for (int x = 0; x < w; ++x) {
        int sx = x + kx;
        if (sx < 0 || sx >= w) continue;
        const T* s = col_row + static_cast<std::size_t>(x) * k;
        T* d = dst_row + static_cast<std::size_t>(sx) * c;
        for (int i = 0; i < c; ++i) d[i] += s[i];
      }
    }
  }
}

// Single-image conv forward: in {h*w, c_in} -> out {h*w, c_out}.
// `cols` is caller-provided scratch of size (h*w) * (9*c_in).
template <typename T>
inline void conv3x3_forward(const ConvParams<T>& p, const T* in, int h, int w, T* cols, T* out) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  im2col_3x3(in, h, w, p.c_in, cols);
  Eigen::Map<const Mat> a(cols, hw, 9 * p.c_in);
  Eigen::Map<const Mat> wm(p.weight.data(), 9 * p.c_in, p.c_out);
  Eigen::Map<Mat> o(out, hw, p.c_out);
  o.noalias() = a * wm;
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(p.bias.data(), p.c_out);
  o.rowwise() += b.transpose();
}

// Backward: accumulates grad_weight/grad_bias into gw/gb (same shapes as
// the params) and writes input gradient into din when non-null.
// `cols` must hold im2col(input); `cols_grad` is scratch of the same size.
template <typename T>
inline void conv3x3_backward(const ConvParams<T>& p, const T* in, const T* dout, int h, int w,
                             T* cols, T* cols_grad, T* gw, T* gb, T* din) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const int k = 9 * p.c_in;
  im2col_3x3(in, h, w, p.c_in, cols);
  Eigen::Map<const Mat> a(cols, hw, k);
  Eigen::Map<const Mat> dy(dout, hw, p.c_out);

  Eigen::Map<Mat> gwm(gw, k, p.c_out);
  gwm.noalias() += a.transpose() * dy;
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gbm(gb, p.c_out);
  gbm.noalias() += dy.colwise().sum().transpose();

  if (din) {
    Eigen::Map<const Mat> wm(p.weight.data(), k, p.c_out);
    Eigen::Map<Mat> dcols(cols_grad, hw, k);
    dcols.noalias() = dy * wm.transpose();
    std::memset(din, 0, sizeof(T) * hw * p.c_in);
    col2im_3x3_accumulate(cols_grad, h, w, p.c_in, din);
  }
}

// ---------------------------------------------------------------------------
// Batch normalization over N*H*W per channel.

template <typename T>
struct BatchNormCache {
  std::vector<T> mean, invstd;
  Tensor<T> xhat;  // same shape as input
};

// x: {n_px, c} flattened across the batch. Training mode uses batch
// statistics (biased variance) and optionally updates running stats;
// eval mode uses the running stats.
template <typename T>
inline void batchnorm_forward(BatchNormParams<T>& p, const T* x, std::size_t n_px, bool training,
                              bool update_running, BatchNormCache<T>* cache, T* out) {
  const int c = p.channels;
  std::vector<T> mean(c, T(0)), var(c, T(0));
  if (training) {
    for (std::size_t i = 0; i < n_px; ++i) {
      const T* row = x + i * c;
      for (int j = 0; j < c; ++j) mean[j] += row[j];
    }
    T inv_n = T(1) / static_cast<T>(n_px);
    for (int j = 0; j < c; ++j) mean[j] *= inv_n;
    for (std::size_t i = 0; i < n_px; ++i) {
      const T* row = x + i * c;
      for (int j = 0; j < c; ++j) {
        T d = row[j] - mean[j];
        var[j] += d * d;
      }
    }
    for (int j = 0; j < c; ++j) var[j] *= inv_n;
    if (update_running) {
      for (int j = 0; j < c; ++j) {
        p.running_mean[j] = (T(1) - p.momentum) * p.running_mean[j] + p.momentum * mean[j];
        p.running_var[j] = (T(1) - p.momentum) * p.running_var[j] + p.momentum * var[j];
      }
    }
  } else {
    for (int j = 0; j < c; ++j) {
      mean[j] = p.running_mean[j];
      var[j] = p.running_var[j];
    }
  }
  std::vector<T> invstd(c);
  for (int j = 0; j < c; ++j) invstd[j] = T(1) / std::sqrt(var[j] + p.eps);

  if (cache) {
    cache->mean = mean;
    cache->invstd = invstd;
    cache->xhat.resize({n_px, static_cast<std::size_t>(c)});
  }
  for (std::size_t i = 0; i < n_px; ++i) {
    const T* row = x + i * c;
    T* orow = out + i * c;
    T* xh = cache ? cache->xhat.data() + i * c : nullptr;
    for (int j = 0; j < c; ++j) {
      T h = (row[j] - mean[j]) * invstd[j];
      if (xh) xh[j] = h;
      orow[j] = p.gamma[j] * h + p.beta[j];
    }
  }
}

template <typename T>
inline void batchnorm_backward(BatchNormParams<T>& p, const BatchNormCache<T>& cache, const T* dout,
                               std::size_t n_px, T* dx) {
  const int c = p.channels;
  std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
  for (std::size_t i = 0; i < n_px; ++i) {
    const T* dy = dout + i * c;
    const T* xh = cache.xhat.data() + i * c;
    for (int j = 0; j < c; ++j) {
      sum_dy[j] += dy[j];
      sum_dy_xhat[j] += dy[j] * xh[j];
    }
  }
  for (int j = 0; j < c; ++j) {
    p.grad_beta[j] += sum_dy[j];
    p.grad_gamma[j] += sum_dy_xhat[j];
  }
  T inv_n = T(1) / static_cast<T>(n_px);
  for (std::size_t i = 0; i < n_px; ++i) {
    const T* dy = dout + i * c;
    const T* xh = cache.xhat.data() + i * c;
    T* d = dx + i * c;
    for (int j = 0; j < c; ++j) {
      d[j] = p.gamma[j] * cache.invstd[j] *
             (dy[j] - inv_n * sum_dy[j] - xh[j] * inv_n * sum_dy_xhat[j]);
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise activations (sign of the output recovers the mask).

template <typename T>
inline void leaky_relu_forward(T* x, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] < T(0)) x[i] *= slope;
}

template <typename T>
inline void leaky_relu_backward(const T* out, T* grad, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i)
    if (out[i] < T(0)) grad[i] *= slope;
}

template <typename T>
inline void sigmoid_forward(T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = T(1) / (T(1) + std::exp(-x[i]));
}

template <typename T>
inline void sigmoid_backward(const T* out, T* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) grad[i] *= out[i] * (T(1) - out[i]);
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Requires even h and w.

template <typename T>
inline void maxpool2x2_forward(const T* in, int h, int w, int c, T* out, int* argmax) {
  const int oh = h / 2, ow = w / 2;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      T* o = out + (static_cast<std::size_t>(y) * ow + x) * c;
      int* am = argmax + (static_cast<std::size_t>(y) * ow + x) * c;
      for (int j = 0; j < c; ++j) {
        T best = -std::numeric_limits<T>::infinity();
        int best_idx = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            std::size_t idx = (static_cast<std::size_t>(2 * y + dy) * w + 2 * x + dx);
            T v = in[idx * c + j];
            if (v > best) {
              best = v;
              best_idx = static_cast<int>(idx);
            }
          }
        o[j] = best;
        am[j] = best_idx;
      }
    }
  }
}

template <typename T>
inline void maxpool2x2_backward(const T* dout, const int* argmax, int h, int w, int c, T* din) {
  const int oh = h / 2, ow = w / 2;
  std::memset(din, 0, sizeof(T) * static_cast<std::size_t>(h) * w * c);
  const std::size_t n_out = static_cast<std::size_t>(oh) * ow;
  for (std::size_t i = 0; i < n_out; ++i)
    for (int j = 0; j < c; ++j) din[static_cast<std::size_t>(argmax[i * c + j]) * c + j] += dout[i * c + j];
}

}  // namespace unsuperpoint
