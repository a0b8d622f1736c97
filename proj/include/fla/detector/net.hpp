#pragma once

#include <vector>

#include "fla/core/rng.hpp"
#include "fla/core/types.hpp"
#include "fla/detector/config.hpp"

namespace fla {

inline constexpr double kLeakySlope = 0.1;

inline int conv_output_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename Scalar>
struct ConvLayer {
  int in_channels = 0, out_channels = 0;
  int kernel = 3, stride = 1, pad = 1;
  MatrixX<Scalar> weight;  // out_channels x (in_channels * kernel^2)
  MatrixX<Scalar> bias;    // out_channels x 1

  void resize(int in_ch, int out_ch, int k, int s, int p) {
    in_channels = in_ch;
    out_channels = out_ch;
    kernel = k;
    stride = s;
    pad = p;
    weight = MatrixX<Scalar>::Zero(out_ch, static_cast<Eigen::Index>(in_ch) * k * k);
    bias = MatrixX<Scalar>::Zero(out_ch, 1);
  }
};

template <typename Scalar>
struct ConvCache {
  MatrixX<Scalar> cols;  // (in_channels * k^2) x (out_w * out_h)
  int in_width = 0, in_height = 0;
};

/// Unrolls conv patches: row (c*k + ky)*k + kx, one column per output pixel.
template <typename Scalar>
void im2col(const PlaneStack<Scalar>& in, int kernel, int stride, int pad,
            int out_w, int out_h, MatrixX<Scalar>& cols) {
  const int ci = in.channels();
  cols.resize(static_cast<Eigen::Index>(ci) * kernel * kernel,
              static_cast<Eigen::Index>(out_w) * out_h);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      Scalar* col = cols.col(static_cast<Eigen::Index>(oy) * out_w + ox).data();
      Eigen::Index r = 0;
      for (int c = 0; c < ci; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < kernel; ++kx, ++r) {
            const int ix = ox * stride - pad + kx;
            col[r] = in.contains(ix, iy) ? in(c, ix, iy) : Scalar(0);
          }
        }
      }
    }
  }
}

/// Pre-activation convolution output.
template <typename Scalar>
PlaneStack<Scalar> conv_forward(const ConvLayer<Scalar>& layer,
                                const PlaneStack<Scalar>& in,
                                ConvCache<Scalar>* cache) {
  const int out_w = conv_output_dim(in.width, layer.kernel, layer.stride, layer.pad);
  const int out_h = conv_output_dim(in.height, layer.kernel, layer.stride, layer.pad);
  MatrixX<Scalar> local_cols;
  MatrixX<Scalar>& cols = cache ? cache->cols : local_cols;
  im2col(in, layer.kernel, layer.stride, layer.pad, out_w, out_h, cols);
  if (cache) {
    cache->in_width = in.width;
    cache->in_height = in.height;
  }
  PlaneStack<Scalar> out;
  out.width = out_w;
  out.height = out_h;
  out.data.noalias() = layer.weight * cols;
  out.data.colwise() += VectorX<Scalar>(layer.bias.col(0));
  return out;
}

template <typename Scalar>
struct ConvGrads {
  MatrixX<Scalar>* weight = nullptr;
  MatrixX<Scalar>* bias = nullptr;
};

/// d_out is the gradient at the pre-activation output; returns the gradient
/// at the layer input and (optionally) accumulates parameter gradients.
template <typename Scalar>
PlaneStack<Scalar> conv_backward(const ConvLayer<Scalar>& layer,
                                 const ConvCache<Scalar>& cache,
                                 const PlaneStack<Scalar>& d_out,
                                 ConvGrads<Scalar> grads = {}) {
  if (grads.weight) grads.weight->noalias() += d_out.data * cache.cols.transpose();
  if (grads.bias) grads.bias->col(0) += d_out.data.rowwise().sum();

  MatrixX<Scalar> d_cols;
  d_cols.noalias() = layer.weight.transpose() * d_out.data;

  PlaneStack<Scalar> d_in(layer.in_channels, cache.in_width, cache.in_height);
  const int k = layer.kernel;
  for (int oy = 0; oy < d_out.height; ++oy) {
    for (int ox = 0; ox < d_out.width; ++ox) {
      const Eigen::Index col = static_cast<Eigen::Index>(oy) * d_out.width + ox;
      const Scalar* src = d_cols.col(col).data();
      Eigen::Index r = 0;
      for (int c = 0; c < layer.in_channels; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * layer.stride - layer.pad + ky;
          for (int kx = 0; kx < k; ++kx, ++r) {
            const int ix = ox * layer.stride - layer.pad + kx;
            if (d_in.contains(ix, iy)) d_in(c, ix, iy) += src[r];
          }
        }
      }
    }
  }
  return d_in;
}

template <typename Scalar>
void leaky_relu_inplace(PlaneStack<Scalar>& x) {
  x.data = x.data.array().max(x.data.array() * Scalar(kLeakySlope)).matrix();
}

/// Backward through leaky ReLU given the post-activation values (sign is
/// preserved by the activation, so the output carries the needed mask).
template <typename Scalar>
void leaky_relu_backward_inplace(const PlaneStack<Scalar>& activated,
                                 PlaneStack<Scalar>& d) {
  d.data = (activated.data.array() > Scalar(0))
               .select(d.data.array(), d.data.array() * Scalar(kLeakySlope))
               .matrix();
}

template <typename Scalar>
PlaneStack<Scalar> upsample2_nearest(const PlaneStack<Scalar>& in) {
  PlaneStack<Scalar> out(in.channels(), in.width * 2, in.height * 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      out.data.col(out.index(x, y)) = in.data.col(in.index(x / 2, y / 2));
    }
  }
  return out;
}

template <typename Scalar>
PlaneStack<Scalar> upsample2_nearest_backward(const PlaneStack<Scalar>& d_out) {
  PlaneStack<Scalar> d_in(d_out.channels(), d_out.width / 2, d_out.height / 2);
  for (int y = 0; y < d_out.height; ++y) {
    for (int x = 0; x < d_out.width; ++x) {
      d_in.data.col(d_in.index(x / 2, y / 2)) += d_out.data.col(d_out.index(x, y));
    }
  }
  return d_in;
}

/// Global context block: out = in + leaky(W * mean(in) + b) broadcast over
/// all pixels. Couples every output to every input pixel.
template <typename Scalar>
struct ContextLayer {
  MatrixX<Scalar> weight;  // C x C
  MatrixX<Scalar> bias;    // C x 1

  void resize(int channels) {
    weight = MatrixX<Scalar>::Zero(channels, channels);
    bias = MatrixX<Scalar>::Zero(channels, 1);
  }
};

template <typename Scalar>
struct ContextCache {
  VectorX<Scalar> mean;
  VectorX<Scalar> pre_activation;
};

template <typename Scalar>
PlaneStack<Scalar> context_forward(const ContextLayer<Scalar>& layer,
                                   const PlaneStack<Scalar>& in,
                                   ContextCache<Scalar>* cache) {
  VectorX<Scalar> mean = in.data.rowwise().mean();
  VectorX<Scalar> z = layer.weight * mean + layer.bias.col(0);
  VectorX<Scalar> h = z.array().max(z.array() * Scalar(kLeakySlope)).matrix();
  if (cache) {
    cache->mean = mean;
    cache->pre_activation = z;
  }
  PlaneStack<Scalar> out = in;
  out.data.colwise() += h;
  return out;
}

template <typename Scalar>
PlaneStack<Scalar> context_backward(const ContextLayer<Scalar>& layer,
                                    const ContextCache<Scalar>& cache,
                                    const PlaneStack<Scalar>& d_out,
                                    ConvGrads<Scalar> grads = {}) {
  VectorX<Scalar> dh = d_out.data.rowwise().sum();
  VectorX<Scalar> dz = (cache.pre_activation.array() > Scalar(0))
                           .select(dh.array(), dh.array() * Scalar(kLeakySlope))
                           .matrix();
  if (grads.weight) grads.weight->noalias() += dz * cache.mean.transpose();
  if (grads.bias) grads.bias->col(0) += dz;
  VectorX<Scalar> d_mean = layer.weight.transpose() * dz;
  PlaneStack<Scalar> d_in = d_out;
  d_in.data.colwise() += VectorX<Scalar>(d_mean / Scalar(d_out.pixels()));
  return d_in;
}

/// Miniature anchor-free keypoint detector: four stride-2 stages, optional
/// global context, two nearest-upsample+conv stages and three 3x3 heads
/// (per-class center heatmap through a sigmoid, box size in heatmap cells,
/// sub-cell center offsets). Everything is differentiable with respect to
/// the input image.
template <typename Scalar>
class KeypointNet {
 public:
  struct Output {
    Heatmap<Scalar> heatmap;        // post-sigmoid, C channels
    PlaneStack<Scalar> size_map;    // 2 channels, heatmap cells
    PlaneStack<Scalar> offset_map;  // 2 channels, cell fractions
  };

  struct Trace {
    ConvCache<Scalar> down_cache[4];
    PlaneStack<Scalar> down_act[4];  // post-leaky
    ContextCache<Scalar> ctx_cache;
    ConvCache<Scalar> up_cache[2];
    PlaneStack<Scalar> up_act[2];
    ConvCache<Scalar> head_cache[3];  // heat, size, offset
    Heatmap<Scalar> heatmap;          // post-sigmoid
  };

  struct ParamGrads {
    std::vector<MatrixX<Scalar>> blocks;
  };

  KeypointNet() = default;

  explicit KeypointNet(const DetectorConfig& config) : config_(config) {
    config.validate();
    const auto& ch = config.stage_channels;
    int in_ch = 3;
    for (int i = 0; i < 4; ++i) {
      down_[i].resize(in_ch, ch[static_cast<std::size_t>(i)], 3, 2, 1);
      in_ch = ch[static_cast<std::size_t>(i)];
    }
    if (config.global_context) ctx_.resize(in_ch);
    for (int i = 0; i < 2; ++i) {
      up_[i].resize(in_ch, ch[static_cast<std::size_t>(4 + i)], 3, 1, 1);
      in_ch = ch[static_cast<std::size_t>(4 + i)];
    }
    heads_[0].resize(in_ch, config.num_classes, 3, 1, 1);
    heads_[1].resize(in_ch, 2, 3, 1, 1);
    heads_[2].resize(in_ch, 2, 3, 1, 1);
  }

  const DetectorConfig& config() const { return config_; }

  /// He-style init from the given stream; heatmap head bias starts at the
  /// logit of a low prior so early heatmaps are near-empty, and the size
  /// head bias starts mid-range.
  void init_weights(Rng& rng) {
    auto init_conv = [&rng](ConvLayer<Scalar>& layer) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(layer.weight.cols()));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
        layer.weight(i) = static_cast<Scalar>(rng.normal(0.0, stddev));
      }
      layer.bias.setZero();
    };
    for (auto& l : down_) init_conv(l);
    if (config_.global_context) {
      const double stddev = std::sqrt(1.0 / static_cast<double>(ctx_.weight.cols()));
      for (Eigen::Index i = 0; i < ctx_.weight.size(); ++i) {
        ctx_.weight(i) = static_cast<Scalar>(rng.normal(0.0, stddev));
      }
      ctx_.bias.setZero();
    }
    for (auto& l : up_) init_conv(l);
    for (auto& l : heads_) init_conv(l);
    heads_[0].bias.setConstant(Scalar(-2.19));  // sigmoid(-2.19) ~ 0.1
    heads_[1].bias.setConstant(Scalar(5.0));
    heads_[2].bias.setConstant(Scalar(0.5));
  }

  Output forward(const Image<Scalar>& image) const {
    Trace trace;
    return forward(image, trace);
  }

  Output forward(const Image<Scalar>& image, Trace& trace) const {
    require(image.channels() == 3 && image.width == config_.input_size &&
                image.height == config_.input_size,
            "KeypointNet::forward: image shape does not match config");
    PlaneStack<Scalar> x = image;
    for (int i = 0; i < 4; ++i) {
      x = conv_forward(down_[i], x, &trace.down_cache[i]);
      leaky_relu_inplace(x);
      trace.down_act[i] = x;
    }
    if (config_.global_context) x = context_forward(ctx_, x, &trace.ctx_cache);
    for (int i = 0; i < 2; ++i) {
      x = upsample2_nearest(x);
      x = conv_forward(up_[i], x, &trace.up_cache[i]);
      leaky_relu_inplace(x);
      trace.up_act[i] = x;
    }
    Output out;
    out.heatmap = conv_forward(heads_[0], x, &trace.head_cache[0]);
    out.heatmap.data =
        (Scalar(1) / (Scalar(1) + (-out.heatmap.data.array()).exp())).matrix();
    trace.heatmap = out.heatmap;
    out.size_map = conv_forward(heads_[1], x, &trace.head_cache[1]);
    out.offset_map = conv_forward(heads_[2], x, &trace.head_cache[2]);
    return out;
  }

  /// Gradient of a scalar loss with respect to the input image, given its
  /// gradients at the three outputs (d_heatmap is taken with respect to the
  /// post-sigmoid heatmap). Parameter gradients are accumulated into
  /// param_grads when provided.
  Image<Scalar> backward(const Trace& trace, const PlaneStack<Scalar>& d_heatmap,
                         const PlaneStack<Scalar>& d_size,
                         const PlaneStack<Scalar>& d_offset,
                         ParamGrads* param_grads = nullptr) const {
    auto grads_for = [&](int block_index) -> ConvGrads<Scalar> {
      if (!param_grads) return {};
      return {&param_grads->blocks[static_cast<std::size_t>(2 * block_index)],
              &param_grads->blocks[static_cast<std::size_t>(2 * block_index + 1)]};
    };
    // block order matches parameter_blocks(): down0..3, [ctx], up0..1, heads
    const int ctx_block = 4;
    const int up_block = config_.global_context ? 5 : 4;
    const int head_block = up_block + 2;

    PlaneStack<Scalar> dz_heat = d_heatmap;
    dz_heat.data.array() *=
        trace.heatmap.data.array() * (Scalar(1) - trace.heatmap.data.array());

    PlaneStack<Scalar> d_trunk =
        conv_backward(heads_[0], trace.head_cache[0], dz_heat, grads_for(head_block));
    d_trunk.data += conv_backward(heads_[1], trace.head_cache[1], d_size,
                                  grads_for(head_block + 1))
                        .data;
    d_trunk.data += conv_backward(heads_[2], trace.head_cache[2], d_offset,
                                  grads_for(head_block + 2))
                        .data;

    PlaneStack<Scalar> d = d_trunk;
    for (int i = 1; i >= 0; --i) {
      leaky_relu_backward_inplace(trace.up_act[i], d);
      d = conv_backward(up_[i], trace.up_cache[i], d, grads_for(up_block + i));
      d = upsample2_nearest_backward(d);
    }
    if (config_.global_context) {
      d = context_backward(ctx_, trace.ctx_cache, d, grads_for(ctx_block));
    }
    for (int i = 3; i >= 0; --i) {
      leaky_relu_backward_inplace(trace.down_act[i], d);
      d = conv_backward(down_[i], trace.down_cache[i], d, grads_for(i));
    }
    return d;
  }

  std::vector<MatrixX<Scalar>*> parameter_blocks() {
    std::vector<MatrixX<Scalar>*> blocks;
    for (auto& l : down_) {
      blocks.push_back(&l.weight);
      blocks.push_back(&l.bias);
    }
    if (config_.global_context) {
      blocks.push_back(&ctx_.weight);
      blocks.push_back(&ctx_.bias);
    }
    for (auto& l : up_) {
      blocks.push_back(&l.weight);
      blocks.push_back(&l.bias);
    }
    for (auto& l : heads_) {
      blocks.push_back(&l.weight);
      blocks.push_back(&l.bias);
    }
    return blocks;
  }

  std::vector<const MatrixX<Scalar>*> parameter_blocks() const {
    auto blocks = const_cast<KeypointNet*>(this)->parameter_blocks();
    return {blocks.begin(), blocks.end()};
  }

  ParamGrads zero_param_grads() const {
    ParamGrads grads;
    for (const MatrixX<Scalar>* block : parameter_blocks()) {
      grads.blocks.push_back(MatrixX<Scalar>::Zero(block->rows(), block->cols()));
    }
    return grads;
  }

  template <typename T>
  KeypointNet<T> cast() const {
    KeypointNet<T> other(config_);
    auto src = parameter_blocks();
    auto dst = other.parameter_blocks();
    for (std::size_t i = 0; i < src.size(); ++i) {
      *dst[i] = src[i]->template cast<T>();
    }
    return other;
  }

  struct SupportRect {
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;  // inclusive image pixels
    bool full_image = false;
  };

  /// Exact preimage of a heatmap cell under the trunk geometry: the set of
  /// input pixels that can influence that cell. With global context enabled
  /// this is the whole image.
  SupportRect input_support(int cell_x, int cell_y) const {
    if (config_.global_context) {
      return {0, 0, config_.input_size - 1, config_.input_size - 1, true};
    }
    auto back_conv = [](int a, int b, int stride, int pad, int kernel) {
      return std::pair<int, int>{a * stride - pad, b * stride - pad + kernel - 1};
    };
    int ax = cell_x, bx = cell_x, ay = cell_y, by = cell_y;
    int dim = config_.heatmap_size();
    auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi); };
    // head conv and the two up convs are stride-1 pad-1 k-3
    for (int step = 0; step < 3; ++step) {
      std::tie(ax, bx) = back_conv(ax, bx, 1, 1, 3);
      std::tie(ay, by) = back_conv(ay, by, 1, 1, 3);
      ax = clampi(ax, dim - 1);
      bx = clampi(bx, dim - 1);
      ay = clampi(ay, dim - 1);
      by = clampi(by, dim - 1);
      if (step > 0) {  // upsample preimage halves indices
        ax /= 2;
        ay /= 2;
        bx /= 2;
        by /= 2;
        dim /= 2;
      }
    }
    for (int i = 3; i >= 0; --i) {
      std::tie(ax, bx) = back_conv(ax, bx, 2, 1, 3);
      std::tie(ay, by) = back_conv(ay, by, 2, 1, 3);
      dim *= 2;
      ax = clampi(ax, dim - 1);
      bx = clampi(bx, dim - 1);
      ay = clampi(ay, dim - 1);
      by = clampi(by, dim - 1);
    }
    return {ax, ay, bx, by, false};
  }

 private:
  DetectorConfig config_;
  ConvLayer<Scalar> down_[4];
  ContextLayer<Scalar> ctx_;
  ConvLayer<Scalar> up_[2];
  ConvLayer<Scalar> heads_[3];
};

}  // namespace fla
