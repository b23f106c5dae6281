#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "joem/dataset.hpp"
#include "joem/error.hpp"
#include "joem/inference.hpp"
#include "joem/losses.hpp"
#include "joem/optim.hpp"
#include "joem/semantic.hpp"
#include "joem/split.hpp"
#include "joem/tensor_file.hpp"
#include "joem/visual_encoder.hpp"

namespace joem {

struct TrainConfig {
  double lambda = 0.08;     // SC weight in the total objective
  double ce_weight = 1.0;   // unit weights reproduce the published objective
  double bar_weight = 1.0;
  int r = 4;                // BAR interpolation factor
  double tau_s = 5.0;       // semantic-space relation temperature
  double tau_mu = 1.0;      // joint-space relation temperature
  int epochs = 30;
  int batch_size = 8;
  double lr_visual = 0.05;
  double lr_semantic = 2e-3;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  double poly_power = 0.9;
  std::uint64_t seed = 1;
  int embed_dim = 16;                 // joint-space dimension C
  std::vector<int> hidden = {12, 12};  // visual encoder hidden widths
  double leaky_slope = 0.01;

  void validate() const {
    if (lambda < 0.0) fail(ErrorKind::invalid_parameter, "TrainConfig: lambda must be >= 0");
    if (ce_weight < 0.0 || bar_weight < 0.0) {
      fail(ErrorKind::invalid_parameter, "TrainConfig: loss weights must be >= 0");
    }
    if (r < 1) fail(ErrorKind::invalid_parameter, "TrainConfig: r must be >= 1");
    if (tau_s <= 0.0 || tau_mu <= 0.0) {
      fail(ErrorKind::invalid_parameter, "TrainConfig: temperatures must be positive");
    }
    if (epochs < 0) fail(ErrorKind::invalid_parameter, "TrainConfig: epochs must be >= 0");
    if (batch_size < 1) fail(ErrorKind::invalid_parameter, "TrainConfig: batch size must be >= 1");
    if (lr_visual <= 0.0 || lr_semantic <= 0.0) {
      fail(ErrorKind::invalid_parameter, "TrainConfig: learning rates must be positive");
    }
    if (weight_decay < 0.0) fail(ErrorKind::invalid_parameter, "TrainConfig: weight decay must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) {
      fail(ErrorKind::invalid_parameter, "TrainConfig: momentum must be in [0,1)");
    }
    if (embed_dim < 1) fail(ErrorKind::invalid_parameter, "TrainConfig: embed_dim must be >= 1");
  }
};

/// Everything the joint embedding needs at test time.
struct JointModel {
  VisualEncoderParams visual;
  ClassifierWeights classifier;  // CE head over seen classes
  SemanticEncoderParams encoder;
};

struct EpochStats {
  int epoch = 0;
  double ce = 0.0;
  double bar = 0.0;
  double sc = 0.0;
  double total = 0.0;
};

struct TrainResult {
  JointModel model;
  std::vector<EpochStats> log;
  bool diverged = false;
  std::string divergence_note;
  bool degenerate_ce = false;   // |S| = 1 convention was applied
  double seen_nn_accuracy = 0.0;
};

// --------------------------------------------------------------------------
// Checkpoint (de)serialization on top of the named-tensor container.

inline TensorFile model_to_tensors(const JointModel& model) {
  TensorFile file;
  file.tensors.push_back({"visual/leaky_slope", {1}, {model.visual.leaky_slope}});
  for (std::size_t l = 0; l < model.visual.layers.size(); ++l) {
    const ConvLayer& layer = model.visual.layers[l];
    const std::string stem = "visual/conv" + std::to_string(l);
    file.tensors.push_back({stem + "/weight",
                            {3, 3, static_cast<std::uint64_t>(layer.in_ch),
                             static_cast<std::uint64_t>(layer.out_ch)},
                            layer.weight});
    file.tensors.push_back(
        {stem + "/bias", {static_cast<std::uint64_t>(layer.out_ch)}, layer.bias});
  }
  NamedTensor ids;
  ids.name = "classifier/ids";
  NamedTensor weights;
  weights.name = "classifier/weight";
  for (const auto& [id, w] : model.classifier.entries) {
    ids.data.push_back(static_cast<double>(id));
    weights.data.insert(weights.data.end(), w.begin(), w.end());
  }
  ids.dims = {ids.data.size()};
  weights.dims = {ids.data.size(), static_cast<std::uint64_t>(model.classifier.dim)};
  file.tensors.push_back(std::move(ids));
  file.tensors.push_back(std::move(weights));
  file.tensors.push_back({"semantic/weight",
                          {static_cast<std::uint64_t>(model.encoder.in_dim),
                           static_cast<std::uint64_t>(model.encoder.out_dim)},
                          model.encoder.weight});
  file.tensors.push_back({"semantic/bias",
                          {static_cast<std::uint64_t>(model.encoder.out_dim)},
                          model.encoder.bias});
  return file;
}

inline JointModel model_from_tensors(const TensorFile& file) {
  JointModel model;
  model.visual.leaky_slope = file.require("visual/leaky_slope").data.at(0);
  for (std::size_t l = 0;; ++l) {
    const std::string stem = "visual/conv" + std::to_string(l);
    if (!file.contains(stem + "/weight")) break;
    const NamedTensor& w = file.require(stem + "/weight");
    const NamedTensor& b = file.require(stem + "/bias");
    if (w.dims.size() != 4 || w.dims[0] != 3 || w.dims[1] != 3) {
      fail(ErrorKind::io_failure, "checkpoint: bad conv weight dims for " + stem);
    }
    ConvLayer layer(static_cast<int>(w.dims[2]), static_cast<int>(w.dims[3]));
    layer.weight = w.data;
    layer.bias = b.data;
    model.visual.layers.push_back(std::move(layer));
  }
  if (model.visual.layers.empty()) {
    fail(ErrorKind::io_failure, "checkpoint: no visual encoder layers");
  }
  const NamedTensor& ids = file.require("classifier/ids");
  const NamedTensor& weights = file.require("classifier/weight");
  if (weights.dims.size() != 2 || weights.dims[0] != ids.data.size()) {
    fail(ErrorKind::io_failure, "checkpoint: classifier tensor shapes disagree");
  }
  const int c_dim = static_cast<int>(weights.dims[1]);
  for (std::size_t k = 0; k < ids.data.size(); ++k) {
    std::vector<double> w(weights.data.begin() + k * c_dim,
                          weights.data.begin() + (k + 1) * c_dim);
    model.classifier.insert(static_cast<int>(ids.data[k]), std::move(w));
  }
  const NamedTensor& enc_w = file.require("semantic/weight");
  const NamedTensor& enc_b = file.require("semantic/bias");
  if (enc_w.dims.size() != 2) fail(ErrorKind::io_failure, "checkpoint: bad encoder dims");
  model.encoder = SemanticEncoderParams(static_cast<int>(enc_w.dims[0]),
                                        static_cast<int>(enc_w.dims[1]));
  model.encoder.weight = enc_w.data;
  model.encoder.bias = enc_b.data;
  return model;
}

inline void save_checkpoint(const JointModel& model, const std::string& path) {
  write_tensor_file(path, model_to_tensors(model));
}

inline JointModel load_checkpoint(const std::string& path) {
  return model_from_tensors(read_tensor_file(path));
}

// --------------------------------------------------------------------------

inline JointModel init_model(const TrainConfig& config, int input_channels,
                             int semantic_dim, const SplitSpec& split) {
  Rng rng(config.seed);
  JointModel model;
  model.visual = make_visual_encoder(input_channels, config.hidden,
                                     config.embed_dim, rng, config.leaky_slope);
  const double cls_bound = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
  for (int id : split.seen_ordered()) {
    std::vector<double> w(config.embed_dim);
    for (double& x : w) x = rng.uniform(-cls_bound, cls_bound);
    model.classifier.insert(id, std::move(w));
  }
  model.encoder = SemanticEncoderParams(semantic_dim, config.embed_dim);
  const double enc_bound = 1.0 / std::sqrt(static_cast<double>(semantic_dim));
  for (double& x : model.encoder.weight) x = rng.uniform(-enc_bound, enc_bound);
  return model;
}

namespace detail {

/// Fraction of pixels whose nearest seen prototype matches the label;
/// computed on (a subsample of) the training set, seen classes only, so the
/// audit-relevant guarantee — no unseen-vector reads during training — holds.
inline double seen_nn_accuracy(const JointModel& model,
                               const std::vector<Sample>& samples,
                               const SemanticTable& table, const SplitSpec& split,
                               std::size_t max_samples = 20) {
  const PrototypeSet protos =
      encode_prototype_set(model.encoder, table, split.seen_ordered());
  std::uint64_t hits = 0, totals = 0;
  const std::size_t n = std::min(samples.size(), max_samples);
  for (std::size_t s = 0; s < n; ++s) {
    const FeatureMap v = visual_forward(model.visual, samples[s].image);
    const LabelMask pred = nn_classify(v, protos);
    for (std::size_t k = 0; k < pred.ids.size(); ++k) {
      hits += pred.ids[k] == samples[s].mask.ids[k] ? 1 : 0;
      ++totals;
    }
  }
  return totals == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(totals);
}

struct FlatGrads {
  VisualEncoderGrads visual;
  std::vector<double> classifier;  // concatenated in seen-id order
  std::vector<double> enc_weight;
  std::vector<double> enc_bias;

  FlatGrads(const VisualEncoderParams& vis, std::size_t cls_size,
            const SemanticEncoderParams& enc)
      : visual(vis), classifier(cls_size, 0.0),
        enc_weight(enc.weight.size(), 0.0), enc_bias(enc.bias.size(), 0.0) {}
};

}  // namespace detail

/// Joint training of both encoders: one optimization step updates the visual
/// encoder and CE head (momentum SGD, weight decay) and the semantic encoder
/// (Adam) from the gradient of the single total objective, with the poly
/// schedule applied to both learning rates. CE and BAR means are pooled over
/// the seen pixels of the whole batch.
inline TrainResult train(const TrainConfig& config, const std::vector<Sample>& samples,
                         const SemanticTable& table, const SplitSpec& split) {
  config.validate();
  split.validate();
  for (std::size_t n = 0; n < samples.size(); ++n) {
    for (int id : samples[n].mask.ids) {
      if (!split.is_seen(id)) {
        fail(ErrorKind::invalid_label,
             "train: sample " + std::to_string(n) + " contains non-seen class " +
                 std::to_string(id));
      }
    }
  }

  const int input_channels =
      samples.empty() ? 1 : samples.front().image.channels;
  TrainResult result;
  result.model = init_model(config, input_channels, table.dim(), split);
  if (config.epochs == 0 || samples.empty()) {
    result.seen_nn_accuracy =
        detail::seen_nn_accuracy(result.model, samples, table, split);
    return result;
  }

  const std::vector<int> seen = split.seen_ordered();
  const bool sc_active = config.lambda > 0.0 && seen.size() >= 2;
  if (seen.size() < 2) result.degenerate_ce = true;

  Rng shuffle_rng(Rng::mix(config.seed ^ 0x5a5a5a5aull));
  const long batches_per_epoch =
      static_cast<long>((samples.size() + config.batch_size - 1) / config.batch_size);
  const long max_iter = static_cast<long>(config.epochs) * batches_per_epoch;
  long iter = 0;

  std::vector<double> sgd_velocity_cls;
  std::vector<std::vector<double>> sgd_velocity_w(result.model.visual.layers.size());
  std::vector<std::vector<double>> sgd_velocity_b(result.model.visual.layers.size());
  AdamState adam_w, adam_b;

  std::vector<std::size_t> order(samples.size());
  for (std::size_t n = 0; n < order.size(); ++n) order[n] = n;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    long steps = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));

      // Snapshot for divergence recovery.
      const JointModel last_good = result.model;

      // Forward + per-sample loss sums.
      std::vector<VisualForwardCache> caches;
      std::vector<LossValue> ce_sums, bar_sums;
      caches.reserve(stop - start);
      std::size_t pooled_pixels = 0;
      for (std::size_t n = start; n < stop; ++n) {
        const Sample& sample = samples[order[n]];
        caches.push_back(visual_forward_cached(result.model.visual, sample.image));
        ce_sums.push_back(detail::ce_loss_sum(caches.back().output,
                                              result.model.classifier,
                                              sample.mask, split));
        const FeatureMap smap =
            interpolated_semantic_map(sample.mask, table, config.r);
        bar_sums.push_back(detail::regression_loss_sum(
            caches.back().output, sample.mask, smap, result.model.encoder, split));
        pooled_pixels += ce_sums.back().pixels;
        result.degenerate_ce = result.degenerate_ce || ce_sums.back().degenerate;
      }
      if (pooled_pixels == 0) {
        fail(ErrorKind::undefined_loss, "train: batch has no seen-labeled pixels");
      }
      const double inv_pixels = 1.0 / static_cast<double>(pooled_pixels);

      LossValue sc;
      if (sc_active) {
        sc = sc_loss(table, result.model.encoder, split, config.tau_s, config.tau_mu);
      } else {
        sc.grad.encoder_weight.assign(result.model.encoder.weight.size(), 0.0);
        sc.grad.encoder_bias.assign(result.model.encoder.bias.size(), 0.0);
      }

      double ce_value = 0.0, bar_value = 0.0;
      detail::FlatGrads grads(result.model.visual,
                              seen.size() * static_cast<std::size_t>(config.embed_dim),
                              result.model.encoder);
      for (std::size_t b = 0; b < caches.size(); ++b) {
        ce_value += ce_sums[b].value;
        bar_value += bar_sums[b].value;
        // d total / d v for this sample, pooled normalization.
        FeatureMap d_v = ce_sums[b].grad.visual;
        for (std::size_t k = 0; k < d_v.values.size(); ++k) {
          d_v.values[k] = (config.ce_weight * d_v.values[k] +
                           config.bar_weight * bar_sums[b].grad.visual.values[k]) *
                          inv_pixels;
        }
        visual_backward(result.model.visual, caches[b], d_v, grads.visual);
        std::size_t offset = 0;
        for (int id : seen) {
          const std::vector<double>& gw = ce_sums[b].grad.classifier.at(id);
          for (std::size_t k = 0; k < gw.size(); ++k) {
            grads.classifier[offset + k] += config.ce_weight * gw[k] * inv_pixels;
          }
          offset += gw.size();
        }
        for (std::size_t k = 0; k < grads.enc_weight.size(); ++k) {
          grads.enc_weight[k] +=
              config.bar_weight * bar_sums[b].grad.encoder_weight[k] * inv_pixels;
        }
        for (std::size_t k = 0; k < grads.enc_bias.size(); ++k) {
          grads.enc_bias[k] +=
              config.bar_weight * bar_sums[b].grad.encoder_bias[k] * inv_pixels;
        }
      }
      ce_value *= inv_pixels;
      bar_value *= inv_pixels;
      for (std::size_t k = 0; k < grads.enc_weight.size(); ++k) {
        grads.enc_weight[k] += config.lambda * sc.grad.encoder_weight[k];
      }
      for (std::size_t k = 0; k < grads.enc_bias.size(); ++k) {
        grads.enc_bias[k] += config.lambda * sc.grad.encoder_bias[k];
      }

      const double total = config.ce_weight * ce_value +
                           config.bar_weight * bar_value +
                           config.lambda * sc.value;
      if (!std::isfinite(total)) {
        result.model = last_good;
        result.diverged = true;
        result.divergence_note = "non-finite loss at epoch " +
                                 std::to_string(epoch) + ", iter " +
                                 std::to_string(iter);
        return result;
      }

      const double lr_vis =
          poly_lr(config.lr_visual, iter, max_iter, config.poly_power);
      const double lr_sem =
          poly_lr(config.lr_semantic, iter, max_iter, config.poly_power);
      try {
        for (std::size_t l = 0; l < result.model.visual.layers.size(); ++l) {
          sgd_step(result.model.visual.layers[l].weight, grads.visual.weight[l],
                   sgd_velocity_w[l], lr_vis, config.momentum, config.weight_decay);
          sgd_step(result.model.visual.layers[l].bias, grads.visual.bias[l],
                   sgd_velocity_b[l], lr_vis, config.momentum, config.weight_decay);
        }
        std::vector<double> cls_flat;
        cls_flat.reserve(grads.classifier.size());
        for (int id : seen) {
          const auto& w = result.model.classifier.at(id);
          cls_flat.insert(cls_flat.end(), w.begin(), w.end());
        }
        sgd_step(cls_flat, grads.classifier, sgd_velocity_cls, lr_vis,
                 config.momentum, config.weight_decay);
        std::size_t offset = 0;
        for (int id : seen) {
          auto& w = result.model.classifier.entries.at(id);
          std::copy(cls_flat.begin() + offset, cls_flat.begin() + offset + w.size(),
                    w.begin());
          offset += w.size();
        }
        adam_step(result.model.encoder.weight, grads.enc_weight, adam_w, lr_sem);
        adam_step(result.model.encoder.bias, grads.enc_bias, adam_b, lr_sem);
      } catch (const Error& e) {
        result.model = last_good;
        result.diverged = true;
        result.divergence_note = e.what();
        return result;
      }

      stats.ce += ce_value;
      stats.bar += bar_value;
      stats.sc += sc.value;
      stats.total += total;
      ++steps;
      ++iter;
    }

    stats.ce /= static_cast<double>(steps);
    stats.bar /= static_cast<double>(steps);
    stats.sc /= static_cast<double>(steps);
    stats.total /= static_cast<double>(steps);
    result.log.push_back(stats);
  }

  result.seen_nn_accuracy =
      detail::seen_nn_accuracy(result.model, samples, table, split);
  return result;
}

/// Per-epoch loss log CSV: `epoch,ce,bar,sc,total`.
inline void write_loss_log_csv(const std::vector<EpochStats>& log,
                               const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_failure, "cannot write " + path);
  out << "epoch,ce,bar,sc,total\n";
  char buf[160];
  for (const EpochStats& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.ce,
                  e.bar, e.sc, e.total);
    out << buf;
  }
}

}  // namespace joem
