#pragma once

#include <algorithm>
#include <cmath>

#include "joem/error.hpp"
#include "joem/feature_map.hpp"
#include "joem/semantic.hpp"

namespace joem {

/// Nearest-neighbor downsampling of a label mask by an integer factor.
///
/// Output cell (i, j) samples source pixel (floor((i+0.5)r), floor((j+0.5)r)),
/// i.e. the center of the r x r cell. Non-divisible dimensions round the
/// output size up and clamp sampled indices to the last row/column.
inline LabelMask nn_downsample(const LabelMask& mask, int r) {
  if (r < 1) fail(ErrorKind::invalid_parameter, "nn_downsample: factor must be >= 1");
  if (mask.ids.empty()) fail(ErrorKind::invalid_input, "nn_downsample: empty mask");
  const int out_h = (mask.height + r - 1) / r;
  const int out_w = (mask.width + r - 1) / r;
  LabelMask out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    const int si = std::min(i * r + r / 2, mask.height - 1);
    for (int j = 0; j < out_w; ++j) {
      const int sj = std::min(j * r + r / 2, mask.width - 1);
      out.at(i, j) = mask.at(si, sj);
    }
  }
  return out;
}

namespace detail {

/// Bilinear resize with half-pixel centers and replicate-border clamping.
/// The two-lerp form keeps constant inputs bit-exact and stays inside the
/// convex hull of the four source values.
inline FeatureMap bilinear_resize(const FeatureMap& map, int out_h, int out_w) {
  if (map.empty()) fail(ErrorKind::invalid_input, "bilinear resize: empty map");
  if (out_h <= 0 || out_w <= 0) {
    fail(ErrorKind::invalid_parameter, "bilinear resize: output dims must be positive");
  }
  const int ch = map.channels;
  FeatureMap out(out_h, out_w, ch);
  const double scale_y = static_cast<double>(map.height) / out_h;
  const double scale_x = static_cast<double>(map.width) / out_w;
  for (int i = 0; i < out_h; ++i) {
    double sy = (i + 0.5) * scale_y - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(map.height - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, map.height - 1);
    const double fy = sy - y0;
    for (int j = 0; j < out_w; ++j) {
      double sx = (j + 0.5) * scale_x - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(map.width - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, map.width - 1);
      const double fx = sx - x0;
      const double* a = map.pixel(y0, x0);
      const double* b = map.pixel(y0, x1);
      const double* c = map.pixel(y1, x0);
      const double* d = map.pixel(y1, x1);
      double* o = out.pixel(i, j);
      for (int k = 0; k < ch; ++k) {
        const double top = a[k] + fx * (b[k] - a[k]);
        const double bot = c[k] + fx * (d[k] - c[k]);
        o[k] = top + fy * (bot - top);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Bilinear upsampling by an integer factor r (half-pixel convention).
/// r = 1 reproduces the input bit-for-bit.
inline FeatureMap bilinear_upsample(const FeatureMap& map, int r) {
  if (r < 1) fail(ErrorKind::invalid_parameter, "bilinear_upsample: factor must be >= 1");
  return detail::bilinear_resize(map, map.height * r, map.width * r);
}

/// Stack the per-class semantic vector into every pixel of its region:
/// out(p) = s_{mask(p)}.
inline FeatureMap stack_semantic(const LabelMask& mask,
                                 const SemanticTable& table) {
  if (mask.ids.empty()) fail(ErrorKind::invalid_input, "stack_semantic: empty mask");
  const int d = table.dim();
  FeatureMap out(mask.height, mask.width, d);
  for (int i = 0; i < mask.height; ++i) {
    for (int j = 0; j < mask.width; ++j) {
      const std::vector<double>& vec = table.vector(mask.at(i, j));
      double* o = out.pixel(i, j);
      for (int k = 0; k < d; ++k) o[k] = vec[k];
    }
  }
  return out;
}

/// The interpolated semantic feature map s-tilde: downsample the mask by r,
/// stack semantic vectors, and bilinearly upsample back. Away from region
/// boundaries this equals the plain stacked map; inside the blend band each
/// pixel is a convex combination of neighboring class vectors, which is what
/// produces the virtual prototypes the BAR loss regresses onto.
inline FeatureMap interpolated_semantic_map(const LabelMask& mask,
                                            const SemanticTable& table,
                                            int r) {
  if (r < 1) {
    fail(ErrorKind::invalid_parameter, "interpolated_semantic_map: factor must be >= 1");
  }
  const LabelMask small = nn_downsample(mask, r);
  const FeatureMap stacked = stack_semantic(small, table);
  FeatureMap up = bilinear_upsample(stacked, r);
  if (up.height == mask.height && up.width == mask.width) return up;
  // Non-divisible dimensions: the upsampled map overshoots; crop back so the
  // result pairs pixel-for-pixel with the original mask.
  FeatureMap out(mask.height, mask.width, up.channels);
  for (int i = 0; i < mask.height; ++i) {
    for (int j = 0; j < mask.width; ++j) {
      const double* src = up.pixel(i, j);
      double* dst = out.pixel(i, j);
      for (int k = 0; k < up.channels; ++k) dst[k] = src[k];
    }
  }
  return out;
}

}  // namespace joem
