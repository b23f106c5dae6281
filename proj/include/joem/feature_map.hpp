#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "joem/error.hpp"

namespace joem {

/// Dense H x W x C grid of doubles, row-major with channels innermost.
/// Used for visual features v, semantic feature maps s / s-tilde and
/// prototype maps mu / mu-tilde.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c) {
    if (h <= 0 || w <= 0 || c <= 0) {
      fail(ErrorKind::invalid_parameter, "FeatureMap dimensions must be positive");
    }
    values.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  bool empty() const { return values.empty(); }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }

  std::size_t offset(int i, int j) const {
    return (static_cast<std::size_t>(i) * width + j) * channels;
  }

  double& at(int i, int j, int c) { return values[offset(i, j) + c]; }
  double at(int i, int j, int c) const { return values[offset(i, j) + c]; }

  double* pixel(int i, int j) { return values.data() + offset(i, j); }
  const double* pixel(int i, int j) const { return values.data() + offset(i, j); }

  bool all_finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const FeatureMap& other) const {
    return height == other.height && width == other.width &&
           channels == other.channels;
  }
};

/// H x W grid of non-negative integer class ids (ground truth or predictions).
struct LabelMask {
  int height = 0;
  int width = 0;
  std::vector<int> ids;

  LabelMask() = default;
  LabelMask(int h, int w, int fill = 0) : height(h), width(w) {
    if (h <= 0 || w <= 0) {
      fail(ErrorKind::invalid_parameter, "LabelMask dimensions must be positive");
    }
    ids.assign(static_cast<std::size_t>(h) * w, fill);
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }

  int& at(int i, int j) { return ids[static_cast<std::size_t>(i) * width + j]; }
  int at(int i, int j) const {
    return ids[static_cast<std::size_t>(i) * width + j];
  }

  bool same_shape(const LabelMask& other) const {
    return height == other.height && width == other.width;
  }
};

inline void require_same_spatial(const FeatureMap& map, const LabelMask& mask,
                                 const std::string& where) {
  if (map.height != mask.height || map.width != mask.width) {
    fail(ErrorKind::invalid_input,
         where + ": feature map " + std::to_string(map.height) + "x" +
             std::to_string(map.width) + " does not match mask " +
             std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
}

}  // namespace joem
