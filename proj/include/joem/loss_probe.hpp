#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "joem/feature_map.hpp"
#include "joem/grad_check.hpp"
#include "joem/losses.hpp"
#include "joem/rng.hpp"
#include "joem/semantic.hpp"
#include "joem/split.hpp"

namespace joem {

/// Randomized desk-size loss instance used by `joem gradcheck` and the
/// verification suite. The flattened parameter vector packs, in order:
/// visual features v, classifier weights w (seen-id order), encoder weight,
/// encoder bias — so one vector drives every loss closure and coordinates a
/// given loss ignores simply carry zero gradients.
struct LossProbe {
  FeatureMap v;
  LabelMask y;
  SemanticTable table;
  SemanticEncoderParams enc;
  ClassifierWeights w;
  SplitSpec split;
  double tau_s = 5.0;
  double tau_mu = 1.0;
  double lambda = 0.7;

  std::size_t param_count() const {
    return v.values.size() + split.seen.size() * static_cast<std::size_t>(v.channels) +
           enc.weight.size() + enc.bias.size();
  }
};

inline LossProbe make_loss_probe(std::uint64_t seed, int height = 6, int width = 6,
                                 int c_dim = 5, int d_dim = 7, int num_seen = 5,
                                 int num_unseen = 2) {
  Rng rng(Rng::mix(seed ^ 0x10556u));
  LossProbe probe;
  std::vector<int> unseen_ids;
  for (int u = 0; u < num_unseen; ++u) unseen_ids.push_back(num_seen + u);
  probe.split = make_split(num_seen + num_unseen, unseen_ids, 0);

  probe.table = SemanticTable(d_dim);
  for (int c = 0; c < num_seen + num_unseen; ++c) {
    std::vector<double> vec(d_dim);
    for (double& x : vec) x = rng.normal();
    probe.table.insert(c, std::move(vec));
  }

  probe.v = FeatureMap(height, width, c_dim);
  for (double& x : probe.v.values) x = 0.5 * rng.normal();
  probe.y = LabelMask(height, width);
  const std::vector<int> seen = probe.split.seen_ordered();
  for (int& id : probe.y.ids) id = seen[rng.uniform_index(seen.size())];

  probe.w.dim = c_dim;
  for (int id : seen) {
    std::vector<double> wc(c_dim);
    for (double& x : wc) x = 0.5 * rng.normal();
    probe.w.insert(id, std::move(wc));
  }

  probe.enc = SemanticEncoderParams(d_dim, c_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_dim));
  for (double& x : probe.enc.weight) x = scale * rng.normal();
  for (double& x : probe.enc.bias) x = 0.1 * rng.normal();
  return probe;
}

namespace detail {

inline std::vector<double> pack_probe(const LossProbe& probe) {
  std::vector<double> x;
  x.reserve(probe.param_count());
  x.insert(x.end(), probe.v.values.begin(), probe.v.values.end());
  for (const auto& [_, wc] : probe.w.entries) x.insert(x.end(), wc.begin(), wc.end());
  x.insert(x.end(), probe.enc.weight.begin(), probe.enc.weight.end());
  x.insert(x.end(), probe.enc.bias.begin(), probe.enc.bias.end());
  return x;
}

inline void unpack_probe(const std::vector<double>& x, LossProbe& probe) {
  std::size_t off = 0;
  std::copy(x.begin(), x.begin() + probe.v.values.size(), probe.v.values.begin());
  off += probe.v.values.size();
  for (auto& [_, wc] : probe.w.entries) {
    std::copy(x.begin() + off, x.begin() + off + wc.size(), wc.begin());
    off += wc.size();
  }
  std::copy(x.begin() + off, x.begin() + off + probe.enc.weight.size(),
            probe.enc.weight.begin());
  off += probe.enc.weight.size();
  std::copy(x.begin() + off, x.begin() + off + probe.enc.bias.size(),
            probe.enc.bias.begin());
}

/// Scatter a LossGradients bundle into the packed layout.
inline void pack_gradients(const LossProbe& probe, const LossGradients& g,
                           double scale, std::vector<double>& out) {
  std::size_t off = 0;
  if (!g.visual.empty()) {
    for (std::size_t k = 0; k < g.visual.values.size(); ++k) {
      out[k] += scale * g.visual.values[k];
    }
  }
  off += probe.v.values.size();
  for (const auto& [id, wc] : probe.w.entries) {
    auto it = g.classifier.find(id);
    if (it != g.classifier.end()) {
      for (std::size_t k = 0; k < wc.size(); ++k) out[off + k] += scale * it->second[k];
    }
    off += wc.size();
  }
  for (std::size_t k = 0; k < g.encoder_weight.size(); ++k) {
    out[off + k] += scale * g.encoder_weight[k];
  }
  off += probe.enc.weight.size();
  for (std::size_t k = 0; k < g.encoder_bias.size(); ++k) {
    out[off + k] += scale * g.encoder_bias[k];
  }
}

}  // namespace detail

enum class ProbeLoss { ce, center, bar, sc, total };

/// Closure over the packed parameter vector for one loss (bar takes the
/// interpolation factor; total composes ce + bar + lambda * sc).
inline LossClosure make_loss_closure(const LossProbe& base, ProbeLoss which, int r = 1) {
  return [base, which, r](const std::vector<double>& x,
                          std::vector<double>* grad) -> double {
    LossProbe probe = base;
    detail::unpack_probe(x, probe);
    LossValue value;
    switch (which) {
      case ProbeLoss::ce:
        value = ce_loss(probe.v, probe.w, probe.y, probe.split);
        break;
      case ProbeLoss::center:
        value = center_loss(probe.v, probe.y, probe.table, probe.enc, probe.split);
        break;
      case ProbeLoss::bar:
        value = bar_loss(probe.v, probe.y, probe.table, probe.enc, probe.split, r);
        break;
      case ProbeLoss::sc:
        value = sc_loss(probe.table, probe.enc, probe.split, probe.tau_s, probe.tau_mu);
        break;
      case ProbeLoss::total: {
        const LossValue ce = ce_loss(probe.v, probe.w, probe.y, probe.split);
        const LossValue bar =
            bar_loss(probe.v, probe.y, probe.table, probe.enc, probe.split, r);
        const LossValue sc =
            sc_loss(probe.table, probe.enc, probe.split, probe.tau_s, probe.tau_mu);
        value = total_loss(ce, bar, sc, probe.lambda);
        break;
      }
    }
    if (grad) {
      grad->assign(x.size(), 0.0);
      detail::pack_gradients(probe, value.grad, 1.0, *grad);
    }
    return value.value;
  };
}

inline std::vector<double> pack_loss_probe(const LossProbe& probe) {
  return detail::pack_probe(probe);
}

}  // namespace joem
