#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "unsuperpoint/core/parallel.hpp"
#include "unsuperpoint/core/rng.hpp"
#include "unsuperpoint/core/tensor.hpp"
#include "unsuperpoint/model/config.hpp"
#include "unsuperpoint/model/layers.hpp"

namespace unsuperpoint {

// Raw head maps for a batch, channels-last {N, Hc, Wc, C} with
// Hc = H/8, Wc = W/8. relative channel 0 is x, channel 1 is y.
template <typename T>
struct RawHeads {
  int n = 0, hc = 0, wc = 0, descriptor_dim = 0;
  Tensor<T> scores;    // {N, Hc, Wc, 1}, sigmoid-bounded
  Tensor<T> relative;  // {N, Hc, Wc, 2}, sigmoid-bounded
  Tensor<T> desc_map;  // {N, Hc, Wc, F}, unbounded

  std::size_t cells() const { return static_cast<std::size_t>(hc) * wc; }
};

// Shared backbone (four conv pairs separated by three 2x2 max-pools)
// with score, position and descriptor heads. Every conv except a head's
// final layer is followed by batch norm and leaky ReLU; score and
// position heads end in a sigmoid, the descriptor head has no final
// activation. Fully convolutional: any H, W divisible by 8 works.
template <typename T>
class UnsuperPointNet {
 public:
  struct Cache {
    int n = 0, h = 0, w = 0;
    bool stored = false;
    std::vector<Tensor<T>> acts;               // stage outputs, acts[0] = input
    std::vector<BatchNormCache<T>> bn_caches;  // one per batch-normed conv
    std::vector<std::vector<int>> pool_argmax;
    // per conv block: (input stage, output stage); per pool likewise
    std::vector<std::pair<int, int>> block_stages;
    std::vector<std::pair<int, int>> pool_stages;
  };

  explicit UnsuperPointNet(ModelConfig config = {}) : config_(config) {
    config_.validate();
    const auto& ch = config_.backbone_channels;
    int in = 3;
    for (int i = 0; i < 8; ++i) {
      add_block("backbone" + std::to_string(i), in, ch[i], Act::kLeakyRelu);
      in = ch[i];
    }
    const int hidden = ch[7];
    add_block("score_hidden", in, hidden, Act::kLeakyRelu);
    add_block("score_out", hidden, 1, Act::kSigmoid, /*with_bn=*/false);
    add_block("position_hidden", in, hidden, Act::kLeakyRelu);
    add_block("position_out", hidden, 2, Act::kSigmoid, /*with_bn=*/false);
    add_block("descriptor_hidden", in, hidden, Act::kLeakyRelu);
    add_block("descriptor_out", hidden, config_.descriptor_dim, Act::kNone, /*with_bn=*/false);
  }

  const ModelConfig& config() const { return config_; }

  void init_weights(std::uint64_t seed) {
    const T slope = static_cast<T>(config_.leaky_relu_slope);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      Rng rng(Rng::derive(seed, 0x696e6974ULL, i));
      auto& blk = blocks_[i];
      T fan_in = static_cast<T>(9 * blk.conv.c_in);
      T bound = std::sqrt(T(6) / ((T(1) + slope * slope) * fan_in));
      for (std::size_t j = 0; j < blk.conv.weight.size(); ++j)
        blk.conv.weight[j] = static_cast<T>(rng.uniform(-bound, bound));
      T bias_bound = T(1) / std::sqrt(fan_in);
      for (std::size_t j = 0; j < blk.conv.bias.size(); ++j)
        blk.conv.bias[j] = static_cast<T>(rng.uniform(-bias_bound, bias_bound));
      if (blk.has_bn) {
        blk.bn.gamma.fill(T(1));
        blk.bn.beta.fill(T(0));
        blk.bn.running_mean.fill(T(0));
        blk.bn.running_var.fill(T(1));
      }
    }
  }

  // images: {N, H, W, 3}, already normalized. Throws when H or W is not
  // divisible by 8. `cache` may be null for inference.
  RawHeads<T> forward(const Tensor<T>& images, bool training, bool update_running, Cache* cache,
                      int threads = 0) {
    if (images.dims().size() != 4 || images.dim(3) != 3)
      throw std::invalid_argument("forward: expected {N, H, W, 3} input");
    const int n = static_cast<int>(images.dim(0));
    const int h = static_cast<int>(images.dim(1));
    const int w = static_cast<int>(images.dim(2));
    if (h % 8 != 0 || w % 8 != 0)
      throw std::invalid_argument("forward: image dimensions must be a multiple of 8, got " +
                                  std::to_string(h) + "x" + std::to_string(w));

    Cache local;
    Cache& c = cache ? *cache : local;
    c.n = n;
    c.h = h;
    c.w = w;
    c.stored = cache != nullptr;
    c.acts.clear();
    c.bn_caches.assign(num_bn_, {});
    c.pool_argmax.assign(3, {});
    c.block_stages.assign(blocks_.size(), {-1, -1});
    c.pool_stages.assign(3, {-1, -1});

    Workspace ws = make_workspace(h, w, threads);

    c.acts.push_back(images);
    int cur_h = h, cur_w = w;
    int stage = 0;

    auto run_block = [&](int blk_idx) {
      Tensor<T> out = conv_bn_act_forward(blocks_[blk_idx], c.acts[stage], n, cur_h, cur_w,
                                          training, update_running,
                                          c.stored ? &c.bn_caches[bn_index_[blk_idx]] : nullptr,
                                          ws, threads);
      c.acts.push_back(std::move(out));
      c.block_stages[blk_idx] = {stage, static_cast<int>(c.acts.size()) - 1};
      stage = static_cast<int>(c.acts.size()) - 1;
    };
    auto run_pool = [&](int pool_idx) {
      const Tensor<T>& in = c.acts[stage];
      const int ch = static_cast<int>(in.dim(3));
      Tensor<T> out({static_cast<std::size_t>(n), static_cast<std::size_t>(cur_h / 2),
                     static_cast<std::size_t>(cur_w / 2), static_cast<std::size_t>(ch)});
      std::vector<int>& am = c.pool_argmax[pool_idx];
      am.assign(out.size(), 0);
      const std::size_t in_px = static_cast<std::size_t>(cur_h) * cur_w;
      const std::size_t out_px = in_px / 4;
      parallel_for(n, threads, [&](std::size_t i) {
        maxpool2x2_forward(in.data() + i * in_px * ch, cur_h, cur_w, ch,
                           out.data() + i * out_px * ch, am.data() + i * out_px * ch);
      });
      c.acts.push_back(std::move(out));
      c.pool_stages[pool_idx] = {stage, static_cast<int>(c.acts.size()) - 1};
      stage = static_cast<int>(c.acts.size()) - 1;
      cur_h /= 2;
      cur_w /= 2;
    };

    run_block(0);
    run_block(1);
    run_pool(0);
    run_block(2);
    run_block(3);
    run_pool(1);
    run_block(4);
    run_block(5);
    run_pool(2);
    run_block(6);
    run_block(7);
    const int backbone_stage = stage;

    run_block(8);
    run_block(9);
    const int score_stage = stage;
    stage = backbone_stage;
    run_block(10);
    run_block(11);
    const int position_stage = stage;
    stage = backbone_stage;
    run_block(12);
    run_block(13);
    const int descriptor_stage = stage;

    RawHeads<T> heads;
    heads.n = n;
    heads.hc = cur_h;
    heads.wc = cur_w;
    heads.descriptor_dim = config_.descriptor_dim;
    heads.scores = c.acts[score_stage];
    heads.relative = c.acts[position_stage];
    heads.desc_map = c.acts[descriptor_stage];
    if (!c.stored) c.acts.clear();
    return heads;
  }

  // Accumulates parameter gradients for the given head-output gradients.
  // `cache` must come from a forward call with training=true.
  void backward(const Cache& cache, const Tensor<T>& dscores, const Tensor<T>& drelative,
                const Tensor<T>& ddesc_map, int threads = 0) {
    if (!cache.stored) throw std::logic_error("backward: forward cache was not stored");
    const int n = cache.n;
    Workspace ws = make_workspace(cache.h, cache.w, threads);

    const int backbone_stage = cache.block_stages[7].second;
    Tensor<T> dbackbone(cache.acts[backbone_stage].dims());

    auto back_block = [&](int blk_idx, Tensor<T>& dout, bool need_dx) {
      return conv_bn_act_backward(blocks_[blk_idx], blk_idx, cache, dout, ws, threads, need_dx);
    };

    // Heads in reverse; their input gradients sum into the shared
    // backbone output gradient.
    auto run_head = [&](int out_blk, const Tensor<T>& dout) {
      Tensor<T> d = dout;
      Tensor<T> dhidden = back_block(out_blk, d, true);
      Tensor<T> din = back_block(out_blk - 1, dhidden, true);
      dbackbone.as_matrix(dbackbone.size(), 1) += din.as_matrix(din.size(), 1);
    };
    run_head(13, ddesc_map);
    run_head(11, drelative);
    run_head(9, dscores);

    Tensor<T> d = std::move(dbackbone);
    auto back_pool = [&](int pool_idx) {
      const Tensor<T>& in = cache.acts[cache.pool_stages[pool_idx].first];
      const int ih = static_cast<int>(in.dim(1)), iw = static_cast<int>(in.dim(2)),
                ch = static_cast<int>(in.dim(3));
      Tensor<T> din(in.dims());
      const std::size_t in_px = static_cast<std::size_t>(ih) * iw;
      const std::size_t out_px = in_px / 4;
      parallel_for(n, threads, [&](std::size_t i) {
        maxpool2x2_backward(d.data() + i * out_px * ch,
                            cache.pool_argmax[pool_idx].data() + i * out_px * ch, ih, iw, ch,
                            din.data() + i * in_px * ch);
      });
      d = std::move(din);
    };

    d = back_block(7, d, true);
    d = back_block(6, d, true);
    back_pool(2);
    d = back_block(5, d, true);
    d = back_block(4, d, true);
    back_pool(1);
    d = back_block(3, d, true);
    d = back_block(2, d, true);
    back_pool(0);
    d = back_block(1, d, true);
    back_block(0, d, /*need_dx=*/false);
  }

  void zero_grads() {
    for (auto& blk : blocks_) {
      blk.conv.grad_weight.zero();
      blk.conv.grad_bias.zero();
      if (blk.has_bn) {
        blk.bn.grad_gamma.zero();
        blk.bn.grad_beta.zero();
      }
    }
  }

  struct ParamRef {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;  // null for buffers
    bool trainable;
  };

  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (auto& blk : blocks_) {
      out.push_back({blk.name + ".weight", &blk.conv.weight, &blk.conv.grad_weight, true});
      out.push_back({blk.name + ".bias", &blk.conv.bias, &blk.conv.grad_bias, true});
      if (blk.has_bn) {
        out.push_back({blk.name + ".bn.gamma", &blk.bn.gamma, &blk.bn.grad_gamma, true});
        out.push_back({blk.name + ".bn.beta", &blk.bn.beta, &blk.bn.grad_beta, true});
        out.push_back({blk.name + ".bn.running_mean", &blk.bn.running_mean, nullptr, false});
        out.push_back({blk.name + ".bn.running_var", &blk.bn.running_var, nullptr, false});
      }
    }
    return out;
  }

 private:
  enum class Act { kLeakyRelu, kSigmoid, kNone };

  struct Block {
    std::string name;
    ConvParams<T> conv;
    BatchNormParams<T> bn;
    bool has_bn = false;
    Act act = Act::kNone;
  };

  struct Workspace {
    std::vector<std::vector<T>> cols, cols_grad;  // per-thread im2col scratch
    std::vector<Tensor<T>> gw, gb;                // per-thread grad partials
    int threads = 1;
  };

  void add_block(std::string name, int c_in, int c_out, Act act, bool with_bn = true) {
    Block blk;
    blk.name = std::move(name);
    blk.conv.init_shapes(c_in, c_out);
    blk.has_bn = with_bn;
    if (with_bn) blk.bn.init_shapes(c_out);
    blk.act = act;
    bn_index_.push_back(with_bn ? num_bn_++ : -1);
    blocks_.push_back(std::move(blk));
  }

  Workspace make_workspace(int h, int w, int& threads) const {
    Workspace ws;
    if (threads <= 0) threads = std::max(1u, std::thread::hardware_concurrency());
    ws.threads = threads;
    std::size_t max_cols = 0;
    int cur_h = h, cur_w = w;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (i == 2 || i == 4 || i == 6) {
        cur_h /= 2;
        cur_w /= 2;
      }
      std::size_t hh = (i < 8) ? cur_h : h / 8, wwd = (i < 8) ? cur_w : w / 8;
      max_cols = std::max(max_cols, hh * wwd * 9 * blocks_[i].conv.c_in);
    }
    ws.cols.resize(threads);
    ws.cols_grad.resize(threads);
    for (int t = 0; t < threads; ++t) {
      ws.cols[t].resize(max_cols);
      ws.cols_grad[t].resize(max_cols);
    }
    return ws;
  }

  Tensor<T> conv_bn_act_forward(Block& blk, const Tensor<T>& in, int n, int h, int w, bool training,
                                bool update_running, BatchNormCache<T>* bn_cache, Workspace& ws,
                                int threads) {
    const std::size_t px = static_cast<std::size_t>(h) * w;
    Tensor<T> out({static_cast<std::size_t>(n), static_cast<std::size_t>(h),
                   static_cast<std::size_t>(w), static_cast<std::size_t>(blk.conv.c_out)});
    run_per_image(n, threads, ws, [&](std::size_t i, int slot) {
      conv3x3_forward(blk.conv, in.data() + i * px * blk.conv.c_in, h, w, ws.cols[slot].data(),
                      out.data() + i * px * blk.conv.c_out);
    });
    if (blk.has_bn) {
      BatchNormCache<T> scratch;
      batchnorm_forward(blk.bn, out.data(), static_cast<std::size_t>(n) * px, training,
                        training && update_running, bn_cache ? bn_cache : &scratch, out.data());
    }
    switch (blk.act) {
      case Act::kLeakyRelu:
        leaky_relu_forward(out.data(), out.size(), static_cast<T>(config_.leaky_relu_slope));
        break;
      case Act::kSigmoid:
        sigmoid_forward(out.data(), out.size());
        break;
      case Act::kNone:
        break;
    }
    return out;
  }

  Tensor<T> conv_bn_act_backward(Block& blk, int blk_idx, const Cache& cache, Tensor<T>& dout,
                                 Workspace& ws, int threads, bool need_dx) {
    auto [in_stage, out_stage] = cache.block_stages[blk_idx];
    const Tensor<T>& out = cache.acts[out_stage];
    const Tensor<T>& in = cache.acts[in_stage];
    const int n = static_cast<int>(out.dim(0));
    const int h = static_cast<int>(out.dim(1)), w = static_cast<int>(out.dim(2));
    const std::size_t px = static_cast<std::size_t>(h) * w;

    switch (blk.act) {
      case Act::kLeakyRelu:
        leaky_relu_backward(out.data(), dout.data(), out.size(),
                            static_cast<T>(config_.leaky_relu_slope));
        break;
      case Act::kSigmoid:
        sigmoid_backward(out.data(), dout.data(), out.size());
        break;
      case Act::kNone:
        break;
    }
    if (blk.has_bn)
      batchnorm_backward(blk.bn, cache.bn_caches[bn_index_[blk_idx]], dout.data(),
                         static_cast<std::size_t>(n) * px, dout.data());

    ws.gw.assign(ws.threads, Tensor<T>(blk.conv.weight.dims()));
    ws.gb.assign(ws.threads, Tensor<T>(blk.conv.bias.dims()));
    Tensor<T> din;
    if (need_dx) din.resize(in.dims());
    run_per_image(n, threads, ws, [&](std::size_t i, int slot) {
      conv3x3_backward(blk.conv, in.data() + i * px * blk.conv.c_in,
                       dout.data() + i * px * blk.conv.c_out, h, w, ws.cols[slot].data(),
                       ws.cols_grad[slot].data(), ws.gw[slot].data(), ws.gb[slot].data(),
                       need_dx ? din.data() + i * px * blk.conv.c_in : nullptr);
    });
    for (int t = 0; t < ws.threads; ++t) {
      blk.conv.grad_weight.as_matrix(blk.conv.grad_weight.size(), 1) +=
          ws.gw[t].as_matrix(ws.gw[t].size(), 1);
      blk.conv.grad_bias.as_matrix(blk.conv.grad_bias.size(), 1) +=
          ws.gb[t].as_matrix(ws.gb[t].size(), 1);
    }
    return din;
  }

  // Fixed block partition over images; slot t serves a contiguous range
  // so scratch buffers and gradient partials stay thread-private.
  template <typename Fn>
  static void run_per_image(int n, int threads, Workspace& ws, Fn&& fn) {
    int workers = std::min(std::max(threads, 1), std::max(n, 1));
    if (workers <= 1) {
      for (int i = 0; i < n; ++i) fn(static_cast<std::size_t>(i), 0);
      return;
    }
    std::vector<std::thread> pool;
    int chunk = (n + workers - 1) / workers;
    for (int t = 0; t < workers; ++t) {
      int lo = t * chunk, hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([lo, hi, t, &fn] {
        for (int i = lo; i < hi; ++i) fn(static_cast<std::size_t>(i), t);
      });
    }
    for (auto& th : pool) th.join();
  }

  ModelConfig config_;
  std::vector<Block> blocks_;
  std::vector<int> bn_index_;
  int num_bn_ = 0;
};

}  // namespace unsuperpoint
