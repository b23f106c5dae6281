#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "joem/error.hpp"
#include "joem/feature_map.hpp"
#include "joem/resample.hpp"
#include "joem/semantic.hpp"
#include "joem/split.hpp"

namespace joem {

/// Bilinear upsampling of a feature map to the image resolution before
/// per-pixel classification.
inline FeatureMap upsample_features(const FeatureMap& v, int out_h, int out_w) {
  if (v.empty()) fail(ErrorKind::invalid_input, "upsample_features: empty map");
  if (out_h < v.height || out_w < v.width) {
    fail(ErrorKind::invalid_parameter,
         "upsample_features: target dims must be >= source dims");
  }
  if (out_h == v.height && out_w == v.width) return v;
  return detail::bilinear_resize(v, out_h, out_w);
}

/// Per-pixel distances to the two nearest prototypes of distinct classes.
/// Ties go to the smaller class id.
struct NearestTwoMap {
  int height = 0;
  int width = 0;
  std::vector<int> c1, c2;
  std::vector<double> d1, d2;

  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * width + j;
  }
};

namespace detail {

struct OrderedPrototypes {
  std::vector<int> ids;                        // ascending
  std::vector<const std::vector<double>*> vecs;
  int dim = 0;
};

inline OrderedPrototypes order_prototypes(const PrototypeSet& protos) {
  OrderedPrototypes out;
  out.ids = protos.ids();  // std::map keys are already ascending
  out.dim = protos.dim;
  for (int id : out.ids) out.vecs.push_back(&protos.at(id));
  return out;
}

/// Rejects identical prototypes shared between a seen and an unseen class;
/// they would make the calibrated decision rules ill-defined (d1 = d2 = 0).
/// Also requires every prototype class to belong to the split's universe.
inline void reject_cross_set_duplicates(const OrderedPrototypes& ordered,
                                        const SplitSpec& split) {
  for (int id : ordered.ids) {
    if (!split.in_universe(id)) {
      fail(ErrorKind::unknown_class,
           "classifier: prototype class " + std::to_string(id) +
               " is neither seen nor unseen in the split");
    }
  }
  const std::size_t n = ordered.ids.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const bool mixed = (split.is_seen(ordered.ids[a]) && split.is_unseen(ordered.ids[b])) ||
                         (split.is_unseen(ordered.ids[a]) && split.is_seen(ordered.ids[b]));
      if (!mixed) continue;
      if (*ordered.vecs[a] == *ordered.vecs[b]) {
        fail(ErrorKind::degenerate_input,
             "classifier: classes " + std::to_string(ordered.ids[a]) + " (seen/unseen) and " +
                 std::to_string(ordered.ids[b]) +
                 " have identical prototypes across the seen/unseen split");
      }
    }
  }
}

/// Nearest prototypes at one pixel: global first/second plus per-set bests.
/// Ascending-id iteration with strict `<` keeps the smallest id on ties, so
/// every decision rule built on this scan shares one tie-break convention.
struct PixelNeighbors {
  int c1 = -1, c2 = -1;
  double d1 = HUGE_VAL, d2 = HUGE_VAL;
  int best_seen = -1, best_unseen = -1;
  double d_seen = HUGE_VAL, d_unseen = HUGE_VAL;
};

inline PixelNeighbors scan_pixel(const double* vp, const OrderedPrototypes& ordered,
                                 const SplitSpec* split) {
  PixelNeighbors nb;
  const int dim = ordered.dim;
  for (std::size_t k = 0; k < ordered.ids.size(); ++k) {
    const double* mu = ordered.vecs[k]->data();
    double sumsq = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double diff = vp[c] - mu[c];
      sumsq += diff * diff;
    }
    const double d = std::sqrt(sumsq);
    const int id = ordered.ids[k];
    if (d < nb.d1) {
      nb.c2 = nb.c1;
      nb.d2 = nb.d1;
      nb.c1 = id;
      nb.d1 = d;
    } else if (d < nb.d2) {
      nb.c2 = id;
      nb.d2 = d;
    }
    if (split) {
      if (split->is_seen(id)) {
        if (d < nb.d_seen) {
          nb.best_seen = id;
          nb.d_seen = d;
        }
      } else if (split->is_unseen(id)) {
        if (d < nb.d_unseen) {
          nb.best_unseen = id;
          nb.d_unseen = d;
        }
      }
    }
  }
  return nb;
}

inline int nn_decide(const PixelNeighbors& nb) { return nb.c1; }

inline int cs_decide(const PixelNeighbors& nb, double gamma) {
  if (nb.best_seen < 0) return nb.best_unseen;
  if (nb.best_unseen < 0) return nb.best_seen;
  const double adj_unseen = nb.d_unseen - gamma;
  if (nb.d_seen < adj_unseen) return nb.best_seen;
  if (adj_unseen < nb.d_seen) return nb.best_unseen;
  return std::min(nb.best_seen, nb.best_unseen);
}

inline int ac_decide(const PixelNeighbors& nb, double sigma, const SplitSpec& split) {
  if (nb.c2 >= 0 && split.is_seen(nb.c1) && split.is_unseen(nb.c2)) {
    const double ratio = nb.d2 > 0.0 ? nb.d1 / nb.d2 : 1.0;
    return ratio <= sigma ? nb.c1 : nb.c2;
  }
  return nb.c1;
}

}  // namespace detail

/// First and second nearest prototypes (by Euclidean distance) per pixel.
inline NearestTwoMap nearest_two(const FeatureMap& v, const PrototypeSet& protos) {
  if (protos.entries.size() < 2) {
    fail(ErrorKind::invalid_input, "nearest_two: need at least 2 prototypes");
  }
  if (v.channels != protos.dim) {
    fail(ErrorKind::invalid_input, "nearest_two: feature/prototype dimension mismatch");
  }
  const auto ordered = detail::order_prototypes(protos);
  NearestTwoMap out;
  out.height = v.height;
  out.width = v.width;
  const std::size_t n = v.pixel_count();
  out.c1.resize(n);
  out.c2.resize(n);
  out.d1.resize(n);
  out.d2.resize(n);
  for (int i = 0; i < v.height; ++i) {
    for (int j = 0; j < v.width; ++j) {
      const auto nb = detail::scan_pixel(v.pixel(i, j), ordered, nullptr);
      const std::size_t k = out.index(i, j);
      out.c1[k] = nb.c1;
      out.c2[k] = nb.c2;
      out.d1[k] = nb.d1;
      out.d2[k] = nb.d2;
    }
  }
  return out;
}

/// Plain nearest-neighbor classification over all prototypes.
inline LabelMask nn_classify(const FeatureMap& v, const PrototypeSet& protos) {
  if (protos.entries.empty()) {
    fail(ErrorKind::invalid_input, "nn_classify: empty prototype set");
  }
  if (v.channels != protos.dim) {
    fail(ErrorKind::invalid_input, "nn_classify: feature/prototype dimension mismatch");
  }
  const auto ordered = detail::order_prototypes(protos);
  LabelMask out(v.height, v.width);
  for (int i = 0; i < v.height; ++i) {
    for (int j = 0; j < v.width; ++j) {
      out.at(i, j) = detail::nn_decide(detail::scan_pixel(v.pixel(i, j), ordered, nullptr));
    }
  }
  return out;
}

/// Calibrated stacking: subtract a constant gamma from unseen-class
/// distances before the argmin. gamma = 0 reduces to nn_classify.
inline LabelMask cs_classify(const FeatureMap& v, const PrototypeSet& protos,
                             const SplitSpec& split, double gamma) {
  if (!std::isfinite(gamma)) {
    fail(ErrorKind::invalid_parameter, "cs_classify: gamma must be finite");
  }
  if (protos.entries.empty()) {
    fail(ErrorKind::invalid_input, "cs_classify: empty prototype set");
  }
  const auto ordered = detail::order_prototypes(protos);
  detail::reject_cross_set_duplicates(ordered, split);
  LabelMask out(v.height, v.width);
  for (int i = 0; i < v.height; ++i) {
    for (int j = 0; j < v.width; ++j) {
      out.at(i, j) =
          detail::cs_decide(detail::scan_pixel(v.pixel(i, j), ordered, &split), gamma);
    }
  }
  return out;
}

/// Sphere {x : ||x - mu_a|| / ||x - mu_b|| = sigma} for sigma in (0,1).
struct Circle {
  std::vector<double> center;
  double radius = 0.0;
};

/// Analytic Apollonius circle for a prototype pair. The radius scales
/// linearly with the prototype separation, which is what makes the AC rule
/// adapt its decision boundary per class pair.
inline Circle apollonius_circle(const std::vector<double>& mu_a,
                                const std::vector<double>& mu_b, double sigma) {
  if (!(sigma > 0.0 && sigma < 1.0)) {
    fail(ErrorKind::invalid_parameter,
         "apollonius_circle: sigma must be in (0,1)");
  }
  if (mu_a.size() != mu_b.size()) {
    fail(ErrorKind::invalid_input, "apollonius_circle: dimension mismatch");
  }
  if (mu_a == mu_b) {
    fail(ErrorKind::degenerate_input, "apollonius_circle: prototypes coincide");
  }
  const double s2 = sigma * sigma;
  const double inv = 1.0 / (1.0 - s2);
  Circle circle;
  circle.center.resize(mu_a.size());
  for (std::size_t k = 0; k < mu_a.size(); ++k) {
    circle.center[k] = (mu_a[k] - s2 * mu_b[k]) * inv;
  }
  circle.radius = sigma * euclidean(mu_a, mu_b) * inv;
  return circle;
}

/// Apollonius calibration (sigma in (0,1]): when the nearest prototype is
/// seen and the runner-up unseen, keep the seen class only while
/// d1/d2 <= sigma; otherwise fall back to the nearest class. sigma = 1
/// reduces to nn_classify.
inline LabelMask ac_classify(const FeatureMap& v, const PrototypeSet& protos,
                             const SplitSpec& split, double sigma) {
  if (!(sigma > 0.0 && sigma <= 1.0)) {
    fail(ErrorKind::invalid_parameter, "ac_classify: sigma must be in (0,1]");
  }
  if (protos.entries.size() < 2) {
    fail(ErrorKind::invalid_input, "ac_classify: need at least 2 prototypes");
  }
  const auto ordered = detail::order_prototypes(protos);
  detail::reject_cross_set_duplicates(ordered, split);
  LabelMask out(v.height, v.width);
  for (int i = 0; i < v.height; ++i) {
    for (int j = 0; j < v.width; ++j) {
      out.at(i, j) = detail::ac_decide(
          detail::scan_pixel(v.pixel(i, j), ordered, &split), sigma, split);
    }
  }
  return out;
}

}  // namespace joem
