// Shared reference implementations for the test suites. Everything here is
// written independently of the library code paths it checks: plain formula
// evaluation, brute-force enumeration, long-double accumulation.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "joem/feature_map.hpp"
#include "joem/rng.hpp"
#include "joem/semantic.hpp"

namespace joem_test {

inline joem::LabelMask nn_downsample_oracle(const joem::LabelMask& mask, int r) {
  const int out_h = (mask.height + r - 1) / r;
  const int out_w = (mask.width + r - 1) / r;
  joem::LabelMask out(out_h, out_w);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      int si = static_cast<int>(std::floor((i + 0.5) * r));
      int sj = static_cast<int>(std::floor((j + 0.5) * r));
      si = std::min(si, mask.height - 1);
      sj = std::min(sj, mask.width - 1);
      out.at(i, j) = mask.at(si, sj);
    }
  }
  return out;
}

// Four-weight bilinear formula with half-pixel centers and border clamping.
inline double bilinear_oracle(const joem::FeatureMap& map, int out_h, int out_w,
                              int i, int j, int c) {
  const double sy =
      std::clamp((i + 0.5) * map.height / static_cast<double>(out_h) - 0.5, 0.0,
                 map.height - 1.0);
  const double sx =
      std::clamp((j + 0.5) * map.width / static_cast<double>(out_w) - 0.5, 0.0,
                 map.width - 1.0);
  const int y0 = static_cast<int>(sy);
  const int x0 = static_cast<int>(sx);
  const int y1 = std::min(y0 + 1, map.height - 1);
  const int x1 = std::min(x0 + 1, map.width - 1);
  const double fy = sy - y0;
  const double fx = sx - x0;
  return map.at(y0, x0, c) * (1 - fy) * (1 - fx) + map.at(y0, x1, c) * (1 - fy) * fx +
         map.at(y1, x0, c) * fy * (1 - fx) + map.at(y1, x1, c) * fy * fx;
}

inline joem::FeatureMap bilinear_resize_oracle(const joem::FeatureMap& map,
                                               int out_h, int out_w) {
  joem::FeatureMap out(out_h, out_w, map.channels);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      for (int c = 0; c < map.channels; ++c) {
        out.at(i, j, c) = bilinear_oracle(map, out_h, out_w, i, j, c);
      }
    }
  }
  return out;
}

inline double euclid_oracle(const std::vector<double>& a,
                            const std::vector<double>& b) {
  long double sum = 0.0L;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const long double d = static_cast<long double>(a[k]) - b[k];
    sum += d * d;
  }
  return static_cast<double>(std::sqrt(sum));
}

inline joem::FeatureMap random_map(joem::Rng& rng, int h, int w, int c,
                                   double scale = 1.0) {
  joem::FeatureMap map(h, w, c);
  for (double& x : map.values) x = scale * rng.normal();
  return map;
}

inline joem::LabelMask random_mask(joem::Rng& rng, int h, int w,
                                   const std::vector<int>& classes) {
  joem::LabelMask mask(h, w);
  for (int& id : mask.ids) id = classes[rng.uniform_index(classes.size())];
  return mask;
}

inline joem::SemanticTable random_table(joem::Rng& rng, int num_classes, int dim,
                                        double scale = 1.0) {
  joem::SemanticTable table(dim);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> vec(dim);
    for (double& x : vec) x = scale * rng.normal();
    table.insert(c, std::move(vec));
  }
  return table;
}

}  // namespace joem_test
