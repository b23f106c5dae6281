#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "joem/error.hpp"
#include "joem/feature_map.hpp"
#include "joem/rng.hpp"

namespace joem {

/// 3x3 convolution, zero padding 1, stride 1. Weights are stored
/// [ky][kx][in][out] so the innermost accumulation runs over contiguous
/// output channels.
struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  std::vector<double> weight;  // 3*3*in_ch*out_ch
  std::vector<double> bias;    // out_ch

  ConvLayer() = default;
  ConvLayer(int in, int out)
      : in_ch(in), out_ch(out),
        weight(static_cast<std::size_t>(9) * in * out, 0.0), bias(out, 0.0) {}

  std::size_t w_index(int ky, int kx, int ci, int co) const {
    return ((static_cast<std::size_t>(ky) * 3 + kx) * in_ch + ci) * out_ch + co;
  }
};

/// Small convolutional stack with leaky-rectifier nonlinearities between
/// layers (none after the last), producing the joint-space feature map at
/// input resolution. Stands in for the paper-scale backbone.
struct VisualEncoderParams {
  std::vector<ConvLayer> layers;
  double leaky_slope = 0.01;

  int input_channels() const { return layers.empty() ? 0 : layers.front().in_ch; }
  int output_channels() const { return layers.empty() ? 0 : layers.back().out_ch; }
};

/// Symmetric uniform fan-in initialization.
inline VisualEncoderParams make_visual_encoder(int in_ch,
                                               const std::vector<int>& hidden,
                                               int out_ch, Rng& rng,
                                               double leaky_slope = 0.01) {
  if (in_ch <= 0 || out_ch <= 0) {
    fail(ErrorKind::invalid_parameter, "make_visual_encoder: channel counts must be positive");
  }
  VisualEncoderParams params;
  params.leaky_slope = leaky_slope;
  std::vector<int> widths;
  widths.push_back(in_ch);
  for (int h : hidden) {
    if (h <= 0) fail(ErrorKind::invalid_parameter, "make_visual_encoder: hidden width must be positive");
    widths.push_back(h);
  }
  widths.push_back(out_ch);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    ConvLayer layer(widths[l], widths[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]) * 9.0);
    for (double& w : layer.weight) w = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace detail {

inline FeatureMap conv3x3_forward(const ConvLayer& layer, const FeatureMap& in) {
  if (in.channels != layer.in_ch) {
    fail(ErrorKind::invalid_input,
         "conv3x3: input has " + std::to_string(in.channels) +
             " channels, layer expects " + std::to_string(layer.in_ch));
  }
  FeatureMap out(in.height, in.width, layer.out_ch);
  const int h = in.height, w = in.width;
  const int ci_n = layer.in_ch, co_n = layer.out_ch;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      double* o = out.pixel(i, j);
      for (int co = 0; co < co_n; ++co) o[co] = layer.bias[co];
      for (int ky = 0; ky < 3; ++ky) {
        const int si = i + ky - 1;
        if (si < 0 || si >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sj = j + kx - 1;
          if (sj < 0 || sj >= w) continue;
          const double* ip = in.pixel(si, sj);
          const double* wp = layer.weight.data() + layer.w_index(ky, kx, 0, 0);
          for (int ci = 0; ci < ci_n; ++ci) {
            const double xv = ip[ci];
            const double* wr = wp + static_cast<std::size_t>(ci) * co_n;
            for (int co = 0; co < co_n; ++co) o[co] += xv * wr[co];
          }
        }
      }
    }
  }
  return out;
}

// d_in += conv_transpose(d_out, W); d_w and d_b accumulate in place.
inline void conv3x3_backward(const ConvLayer& layer, const FeatureMap& in,
                             const FeatureMap& d_out, FeatureMap* d_in,
                             std::vector<double>& d_weight,
                             std::vector<double>& d_bias) {
  const int h = in.height, w = in.width;
  const int ci_n = layer.in_ch, co_n = layer.out_ch;
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double* go = d_out.pixel(i, j);
      for (int co = 0; co < co_n; ++co) d_bias[co] += go[co];
      for (int ky = 0; ky < 3; ++ky) {
        const int si = i + ky - 1;
        if (si < 0 || si >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sj = j + kx - 1;
          if (sj < 0 || sj >= w) continue;
          const double* ip = in.pixel(si, sj);
          double* dwp = d_weight.data() + layer.w_index(ky, kx, 0, 0);
          const double* wp = layer.weight.data() + layer.w_index(ky, kx, 0, 0);
          double* gi = d_in ? d_in->pixel(si, sj) : nullptr;
          for (int ci = 0; ci < ci_n; ++ci) {
            const double xv = ip[ci];
            double* dwr = dwp + static_cast<std::size_t>(ci) * co_n;
            const double* wr = wp + static_cast<std::size_t>(ci) * co_n;
            double acc = 0.0;
            for (int co = 0; co < co_n; ++co) {
              dwr[co] += xv * go[co];
              acc += wr[co] * go[co];
            }
            if (gi) gi[ci] += acc;
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Activations retained for the backward pass: the input of every layer and
/// each pre-activation that feeds a nonlinearity.
struct VisualForwardCache {
  std::vector<FeatureMap> layer_inputs;     // size = number of layers
  std::vector<FeatureMap> pre_activations;  // size = number of layers - 1
  FeatureMap output;
};

inline VisualForwardCache visual_forward_cached(const VisualEncoderParams& params,
                                                const FeatureMap& image) {
  if (params.layers.empty()) {
    fail(ErrorKind::invalid_input, "visual_forward: encoder has no layers");
  }
  VisualForwardCache cache;
  FeatureMap current = image;
  const std::size_t n = params.layers.size();
  for (std::size_t l = 0; l < n; ++l) {
    cache.layer_inputs.push_back(current);
    FeatureMap z = detail::conv3x3_forward(params.layers[l], current);
    if (l + 1 < n) {
      cache.pre_activations.push_back(z);
      for (double& x : z.values) {
        if (x < 0.0) x *= params.leaky_slope;
      }
    }
    current = std::move(z);
  }
  cache.output = std::move(current);
  return cache;
}

/// Deterministic forward pass producing the visual feature map v.
inline FeatureMap visual_forward(const VisualEncoderParams& params,
                                 const FeatureMap& image) {
  return visual_forward_cached(params, image).output;
}

struct VisualEncoderGrads {
  std::vector<std::vector<double>> weight;  // per layer
  std::vector<std::vector<double>> bias;

  explicit VisualEncoderGrads(const VisualEncoderParams& params) {
    for (const ConvLayer& layer : params.layers) {
      weight.emplace_back(layer.weight.size(), 0.0);
      bias.emplace_back(layer.bias.size(), 0.0);
    }
  }
};

/// Backprop d_output through the stack, accumulating parameter gradients.
inline void visual_backward(const VisualEncoderParams& params,
                            const VisualForwardCache& cache,
                            const FeatureMap& d_output,
                            VisualEncoderGrads& grads) {
  const std::size_t n = params.layers.size();
  FeatureMap d_current = d_output;
  for (std::size_t li = n; li-- > 0;) {
    if (li + 1 < n) {
      // Through the leaky rectifier of this layer's output.
      const FeatureMap& z = cache.pre_activations[li];
      for (std::size_t k = 0; k < d_current.values.size(); ++k) {
        if (z.values[k] < 0.0) d_current.values[k] *= params.leaky_slope;
      }
    }
    const FeatureMap& in = cache.layer_inputs[li];
    FeatureMap d_in;
    FeatureMap* d_in_ptr = nullptr;
    if (li > 0) {
      d_in = FeatureMap(in.height, in.width, in.channels, 0.0);
      d_in_ptr = &d_in;
    }
    detail::conv3x3_backward(params.layers[li], in, d_current, d_in_ptr,
                             grads.weight[li], grads.bias[li]);
    if (li > 0) d_current = std::move(d_in);
  }
}

}  // namespace joem
