#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "joem/error.hpp"
#include "joem/feature_map.hpp"
#include "joem/resample.hpp"
#include "joem/semantic.hpp"
#include "joem/split.hpp"

namespace joem {

/// Per-seen-class C-dimensional classifier weight w_c (no bias).
struct ClassifierWeights {
  int dim = 0;
  std::map<int, std::vector<double>> entries;

  const std::vector<double>& at(int id) const {
    auto it = entries.find(id);
    if (it == entries.end()) {
      fail(ErrorKind::invalid_input,
           "ClassifierWeights: no weight for class " + std::to_string(id));
    }
    return it->second;
  }

  void insert(int id, std::vector<double> w) {
    if (dim == 0) dim = static_cast<int>(w.size());
    if (static_cast<int>(w.size()) != dim) {
      fail(ErrorKind::invalid_input, "ClassifierWeights: inconsistent dimension");
    }
    entries[id] = std::move(w);
  }
};

/// Adjoints produced alongside a loss value. Containers are empty when the
/// loss does not differentiate with respect to that input.
struct LossGradients {
  FeatureMap visual;                              // d/dv
  std::map<int, std::vector<double>> classifier;  // d/dw_c
  std::vector<double> encoder_weight;             // d/dW, D x C row-major
  std::vector<double> encoder_bias;               // d/db
};

struct LossValue {
  double value = 0.0;
  std::size_t pixels = 0;  // seen-labeled pixels that entered the mean
  bool degenerate = false; // |S| = 1 convention applied
  LossGradients grad;
};

/// Smoothing epsilon for the Euclidean distance inside losses; keeps the
/// gradient bounded when a feature coincides with its prototype.
inline constexpr double kDistanceEps = 1e-8;

namespace detail {

inline double smoothed_norm(const double* diff, int n, double* inv_smooth) {
  double sumsq = 0.0;
  for (int k = 0; k < n; ++k) sumsq += diff[k] * diff[k];
  const double smooth = std::sqrt(sumsq + kDistanceEps * kDistanceEps);
  if (inv_smooth) *inv_smooth = 1.0 / smooth;
  return smooth - kDistanceEps;
}

inline void scale_gradients(LossGradients& g, double f) {
  for (double& x : g.visual.values) x *= f;
  for (auto& [_, w] : g.classifier)
    for (double& x : w) x *= f;
  for (double& x : g.encoder_weight) x *= f;
  for (double& x : g.encoder_bias) x *= f;
}

/// Unnormalized CE sums: value = sum of per-pixel NLL over seen-labeled
/// pixels, gradients are of that sum. The training loop pools counts across
/// a batch before dividing.
inline LossValue ce_loss_sum(const FeatureMap& v, const ClassifierWeights& w,
                             const LabelMask& y, const SplitSpec& split) {
  require_same_spatial(v, y, "ce_loss");
  const std::vector<int> seen = split.seen_ordered();
  const int ns = static_cast<int>(seen.size());
  std::map<int, int> seen_index;
  for (int k = 0; k < ns; ++k) seen_index[seen[k]] = k;

  LossValue out;
  out.grad.visual = FeatureMap(v.height, v.width, v.channels, 0.0);
  for (int id : seen) {
    out.grad.classifier[id] = std::vector<double>(v.channels, 0.0);
    if (static_cast<int>(w.at(id).size()) != v.channels) {
      fail(ErrorKind::invalid_input,
           "ce_loss: classifier dimension does not match feature channels");
    }
  }
  if (ns == 1) out.degenerate = true;  // one-element softmax: loss 0 by convention

  std::vector<double> logits(ns), probs(ns);
  for (int i = 0; i < y.height; ++i) {
    for (int j = 0; j < y.width; ++j) {
      const int label = y.at(i, j);
      auto it = seen_index.find(label);
      if (it == seen_index.end()) {
        fail(ErrorKind::invalid_label,
             "ce_loss: pixel (" + std::to_string(i) + "," + std::to_string(j) +
                 ") has non-seen class " + std::to_string(label));
      }
      const double* vp = v.pixel(i, j);
      double max_logit = -HUGE_VAL;
      for (int k = 0; k < ns; ++k) {
        const std::vector<double>& wk = w.at(seen[k]);
        double z = 0.0;
        for (int c = 0; c < v.channels; ++c) z += wk[c] * vp[c];
        logits[k] = z;
        max_logit = std::max(max_logit, z);
      }
      double denom = 0.0;
      for (int k = 0; k < ns; ++k) {
        probs[k] = std::exp(logits[k] - max_logit);
        denom += probs[k];
      }
      for (int k = 0; k < ns; ++k) probs[k] /= denom;
      out.value += -(logits[it->second] - max_logit - std::log(denom));
      ++out.pixels;

      double* gv = out.grad.visual.pixel(i, j);
      for (int k = 0; k < ns; ++k) {
        const double dz = probs[k] - (k == it->second ? 1.0 : 0.0);
        const std::vector<double>& wk = w.at(seen[k]);
        std::vector<double>& gw = out.grad.classifier[seen[k]];
        for (int c = 0; c < v.channels; ++c) {
          gv[c] += dz * wk[c];
          gw[c] += dz * vp[c];
        }
      }
    }
  }
  return out;
}

/// Unnormalized regression sums shared by the center and BAR losses:
/// value = sum over seen-labeled pixels of d(v(p), enc(smap(p))), where smap
/// is either the plain stacked semantic map (center) or the interpolated one
/// (BAR). Gradients flow to both the visual features and the encoder, which
/// is what couples the two embedding spaces during training.
inline LossValue regression_loss_sum(const FeatureMap& v, const LabelMask& y,
                                     const FeatureMap& smap,
                                     const SemanticEncoderParams& enc,
                                     const SplitSpec& split) {
  require_same_spatial(v, y, "regression loss");
  if (smap.height != v.height || smap.width != v.width) {
    fail(ErrorKind::invalid_input, "regression loss: semantic map dims mismatch");
  }
  if (smap.channels != enc.in_dim) {
    fail(ErrorKind::invalid_input,
         "regression loss: semantic map channels do not match encoder D");
  }
  if (v.channels != enc.out_dim) {
    fail(ErrorKind::invalid_input,
         "regression loss: feature channels do not match encoder C");
  }

  LossValue out;
  out.grad.visual = FeatureMap(v.height, v.width, v.channels, 0.0);
  out.grad.encoder_weight.assign(enc.weight.size(), 0.0);
  out.grad.encoder_bias.assign(enc.bias.size(), 0.0);

  std::vector<double> proto(enc.out_dim), diff(enc.out_dim);
  for (int i = 0; i < y.height; ++i) {
    for (int j = 0; j < y.width; ++j) {
      if (!split.is_seen(y.at(i, j))) continue;  // non-seen pixels contribute nothing
      const double* sp = smap.pixel(i, j);
      for (int c = 0; c < enc.out_dim; ++c) proto[c] = enc.bias[c];
      for (int d = 0; d < enc.in_dim; ++d) {
        const double sd = sp[d];
        const double* wrow =
            enc.weight.data() + static_cast<std::size_t>(d) * enc.out_dim;
        for (int c = 0; c < enc.out_dim; ++c) proto[c] += sd * wrow[c];
      }
      const double* vp = v.pixel(i, j);
      for (int c = 0; c < enc.out_dim; ++c) diff[c] = vp[c] - proto[c];
      double inv_smooth = 0.0;
      out.value += smoothed_norm(diff.data(), enc.out_dim, &inv_smooth);
      ++out.pixels;

      double* gv = out.grad.visual.pixel(i, j);
      for (int c = 0; c < enc.out_dim; ++c) {
        const double g = diff[c] * inv_smooth;  // d dist / d v(p)[c]
        gv[c] += g;
        out.grad.encoder_bias[c] -= g;
        for (int d = 0; d < enc.in_dim; ++d) {
          out.grad.encoder_weight[static_cast<std::size_t>(d) * enc.out_dim + c] -=
              g * sp[d];
        }
      }
    }
  }
  return out;
}

inline LossValue normalized(LossValue sum) {
  if (sum.pixels == 0) {
    fail(ErrorKind::undefined_loss, "loss is undefined: no seen-labeled pixels");
  }
  const double inv = 1.0 / static_cast<double>(sum.pixels);
  sum.value *= inv;
  scale_gradients(sum.grad, inv);
  return sum;
}

}  // namespace detail

/// Cross-entropy over seen classes, normalized by the seen-pixel count.
inline LossValue ce_loss(const FeatureMap& v, const ClassifierWeights& w,
                         const LabelMask& y, const SplitSpec& split) {
  return detail::normalized(detail::ce_loss_sum(v, w, y, split));
}

/// Pixel-wise regression onto exact semantic prototypes.
inline LossValue center_loss(const FeatureMap& v, const LabelMask& y,
                             const SemanticTable& table,
                             const SemanticEncoderParams& enc,
                             const SplitSpec& split) {
  const FeatureMap smap = stack_semantic(y, table);
  return detail::normalized(detail::regression_loss_sum(v, y, smap, enc, split));
}

/// Boundary-aware regression: identical to the center loss except that the
/// target prototype map is built from the down/up-sampled semantic feature
/// map, so pixels near region boundaries regress onto virtual prototypes
/// (convex combinations of the neighboring class prototypes).
inline LossValue bar_loss(const FeatureMap& v, const LabelMask& y,
                          const SemanticTable& table,
                          const SemanticEncoderParams& enc,
                          const SplitSpec& split, int r) {
  const FeatureMap smap = interpolated_semantic_map(y, table, r);
  return detail::normalized(detail::regression_loss_sum(v, y, smap, enc, split));
}

/// Semantic-consistency loss: KL(r || r-hat) summed over seen-class rows,
/// where r is the relation matrix of the fixed semantic vectors (constant
/// target) and r-hat the relation matrix of the current prototypes.
inline LossValue sc_loss(const SemanticTable& table,
                         const SemanticEncoderParams& enc,
                         const SplitSpec& split, double tau_s, double tau_mu) {
  if (tau_s <= 0.0 || tau_mu <= 0.0) {
    fail(ErrorKind::invalid_parameter, "sc_loss: temperatures must be positive");
  }
  const std::vector<int> seen = split.seen_ordered();
  const int k = static_cast<int>(seen.size());
  if (k < 2) fail(ErrorKind::invalid_input, "sc_loss: need at least 2 seen classes");

  std::vector<std::vector<double>> sem(k), mu(k);
  for (int i = 0; i < k; ++i) {
    sem[i] = table.vector(seen[i]);
    mu[i] = encode_semantic(enc, sem[i]);
  }
  const int c_dim = enc.out_dim;

  // Pairwise smoothed distances and inverse smooth norms for both spaces.
  std::vector<double> dist_s(static_cast<std::size_t>(k) * k, 0.0);
  std::vector<double> dist_m(static_cast<std::size_t>(k) * k, 0.0);
  std::vector<double> inv_m(static_cast<std::size_t>(k) * k, 0.0);
  std::vector<double> diff(c_dim);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      std::vector<double> ds(sem[i].size());
      for (std::size_t d = 0; d < ds.size(); ++d) ds[d] = sem[i][d] - sem[j][d];
      const double dsv =
          detail::smoothed_norm(ds.data(), static_cast<int>(ds.size()), nullptr);
      dist_s[static_cast<std::size_t>(i) * k + j] = dsv;
      dist_s[static_cast<std::size_t>(j) * k + i] = dsv;

      for (int c = 0; c < c_dim; ++c) diff[c] = mu[i][c] - mu[j][c];
      double inv = 0.0;
      const double dmv = detail::smoothed_norm(diff.data(), c_dim, &inv);
      dist_m[static_cast<std::size_t>(i) * k + j] = dmv;
      dist_m[static_cast<std::size_t>(j) * k + i] = dmv;
      inv_m[static_cast<std::size_t>(i) * k + j] = inv;
      inv_m[static_cast<std::size_t>(j) * k + i] = inv;
    }
  }

  auto row_softmax = [k](const std::vector<double>& dist, double tau, int i,
                         std::vector<double>& probs, std::vector<double>& logp) {
    double max_logit = -HUGE_VAL;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      max_logit = std::max(max_logit, -tau * dist[static_cast<std::size_t>(i) * k + j]);
    }
    double denom = 0.0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      denom += std::exp(-tau * dist[static_cast<std::size_t>(i) * k + j] - max_logit);
    }
    const double log_denom = std::log(denom);
    for (int j = 0; j < k; ++j) {
      if (j == i) {
        probs[j] = 0.0;
        logp[j] = 0.0;
        continue;
      }
      const double a = -tau * dist[static_cast<std::size_t>(i) * k + j] - max_logit;
      logp[j] = a - log_denom;
      probs[j] = std::exp(logp[j]);
    }
  };

  LossValue out;
  out.grad.encoder_weight.assign(enc.weight.size(), 0.0);
  out.grad.encoder_bias.assign(enc.bias.size(), 0.0);
  std::vector<std::vector<double>> d_mu(k, std::vector<double>(c_dim, 0.0));
  std::vector<double> r_row(k), logr_row(k), rhat_row(k), loghat_row(k);

  for (int i = 0; i < k; ++i) {
    row_softmax(dist_s, tau_s, i, r_row, logr_row);
    row_softmax(dist_m, tau_mu, i, rhat_row, loghat_row);
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      out.value += r_row[j] * (logr_row[j] - loghat_row[j]);
      // d loss / d dist_m[i][j]; the target row r is a constant.
      const double dd = -tau_mu * (rhat_row[j] - r_row[j]);
      const double inv = inv_m[static_cast<std::size_t>(i) * k + j];
      for (int c = 0; c < c_dim; ++c) {
        const double g = dd * (mu[i][c] - mu[j][c]) * inv;
        d_mu[i][c] += g;
        d_mu[j][c] -= g;
      }
    }
  }

  for (int i = 0; i < k; ++i) {
    for (int c = 0; c < c_dim; ++c) {
      const double g = d_mu[i][c];
      out.grad.encoder_bias[c] += g;
      for (int d = 0; d < enc.in_dim; ++d) {
        out.grad.encoder_weight[static_cast<std::size_t>(d) * c_dim + c] +=
            g * sem[i][d];
      }
    }
  }
  // KL divergence is non-negative; cancellation can leave -1e-16 residue.
  out.value = std::max(out.value, 0.0);
  return out;
}

/// Total objective: L = L_ce + L_bar + lambda * L_sc, gradients summed.
inline LossValue total_loss(const LossValue& ce, const LossValue& bar,
                            const LossValue& sc, double lambda) {
  if (lambda < 0.0) {
    fail(ErrorKind::invalid_parameter, "total_loss: lambda must be non-negative");
  }
  LossValue out;
  out.value = ce.value + bar.value + lambda * sc.value;
  out.pixels = ce.pixels;
  out.degenerate = ce.degenerate || bar.degenerate || sc.degenerate;
  out.grad.visual = ce.grad.visual;
  if (!bar.grad.visual.empty()) {
    if (out.grad.visual.empty()) {
      out.grad.visual = bar.grad.visual;
    } else {
      for (std::size_t n = 0; n < out.grad.visual.values.size(); ++n) {
        out.grad.visual.values[n] += bar.grad.visual.values[n];
      }
    }
  }
  out.grad.classifier = ce.grad.classifier;
  out.grad.encoder_weight = bar.grad.encoder_weight;
  out.grad.encoder_bias = bar.grad.encoder_bias;
  if (!sc.grad.encoder_weight.empty()) {
    if (out.grad.encoder_weight.empty()) {
      out.grad.encoder_weight.assign(sc.grad.encoder_weight.size(), 0.0);
      out.grad.encoder_bias.assign(sc.grad.encoder_bias.size(), 0.0);
    }
    for (std::size_t n = 0; n < sc.grad.encoder_weight.size(); ++n) {
      out.grad.encoder_weight[n] += lambda * sc.grad.encoder_weight[n];
    }
    for (std::size_t n = 0; n < sc.grad.encoder_bias.size(); ++n) {
      out.grad.encoder_bias[n] += lambda * sc.grad.encoder_bias[n];
    }
  }
  return out;
}

}  // namespace joem
