#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "joem/error.hpp"
#include "joem/feature_map.hpp"
#include "joem/inference.hpp"
#include "joem/semantic.hpp"
#include "joem/split.hpp"

namespace joem {

/// K x K pixel counts over the full class universe; rows are ground truth,
/// columns are predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(const std::vector<int>& universe) : classes_(universe) {
    for (std::size_t k = 0; k < classes_.size(); ++k) index_[classes_[k]] = static_cast<int>(k);
    counts_.assign(classes_.size() * classes_.size(), 0);
  }

  int size() const { return static_cast<int>(classes_.size()); }
  const std::vector<int>& classes() const { return classes_; }

  std::uint64_t at(int gt_id, int pred_id) const {
    return counts_[static_cast<std::size_t>(index(gt_id)) * classes_.size() + index(pred_id)];
  }

  void add(int gt_id, int pred_id, std::uint64_t count = 1) {
    counts_[static_cast<std::size_t>(index(gt_id)) * classes_.size() + index(pred_id)] += count;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (std::uint64_t c : counts_) t += c;
    return t;
  }

 private:
  int index(int id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
      fail(ErrorKind::unknown_class,
           "ConfusionMatrix: class " + std::to_string(id) + " outside the universe");
    }
    return it->second;
  }

  std::vector<int> classes_;
  std::map<int, int> index_;
  std::vector<std::uint64_t> counts_;
};

/// conf[gt(p)][pred(p)] += 1 over all pixels.
inline void accumulate(ConfusionMatrix& conf, const LabelMask& pred,
                       const LabelMask& gt) {
  if (!pred.same_shape(gt)) {
    fail(ErrorKind::invalid_input, "accumulate: prediction/ground-truth dims differ");
  }
  for (std::size_t k = 0; k < gt.ids.size(); ++k) {
    conf.add(gt.ids[k], pred.ids[k]);
  }
}

/// Intersection-over-union for one class: TP / (TP + FP + FN).
/// Returns false when the union is empty (class absent everywhere).
inline bool class_iou(const ConfusionMatrix& conf, int id, double* iou) {
  std::uint64_t tp = conf.at(id, id);
  std::uint64_t fp = 0, fn = 0;
  for (int other : conf.classes()) {
    if (other == id) continue;
    fp += conf.at(other, id);
    fn += conf.at(id, other);
  }
  const std::uint64_t uni = tp + fp + fn;
  if (uni == 0) return false;
  *iou = static_cast<double>(tp) / static_cast<double>(uni);
  return true;
}

/// Mean IoU over the given classes; classes with an empty union are excluded.
template <typename ClassRange>
double miou(const ConfusionMatrix& conf, const ClassRange& classes) {
  double sum = 0.0;
  int counted = 0;
  bool any = false;
  for (int id : classes) {
    any = true;
    double iou = 0.0;
    if (class_iou(conf, id, &iou)) {
      sum += iou;
      ++counted;
    }
  }
  if (!any) fail(ErrorKind::invalid_input, "miou: empty class set");
  if (counted == 0) {
    fail(ErrorKind::undefined_metric, "miou: every class has an empty union");
  }
  return sum / counted;
}

/// Harmonic mean of seen and unseen mIoU; zero when either side is zero.
inline double hiou(double miou_s, double miou_u) {
  if (miou_s < 0.0 || miou_u < 0.0) {
    fail(ErrorKind::invalid_parameter, "hiou: inputs must be non-negative");
  }
  if (miou_s == 0.0 || miou_u == 0.0) return 0.0;
  return 2.0 * miou_s * miou_u / (miou_s + miou_u);
}

struct BiasCounters {
  std::uint64_t tp_unseen = 0;      // unseen pixels predicted correctly
  std::uint64_t fn_seen_to_unseen = 0;  // seen pixels predicted as any unseen class
};

inline BiasCounters bias_counters(const ConfusionMatrix& conf, const SplitSpec& split) {
  BiasCounters out;
  for (int u : split.unseen) out.tp_unseen += conf.at(u, u);
  for (int s : split.seen) {
    for (int u : split.unseen) out.fn_seen_to_unseen += conf.at(s, u);
  }
  return out;
}

/// Full metric bundle for one prediction set.
struct MetricReport {
  std::map<int, double> per_class_iou;  // only classes with non-empty union
  double miou_seen = 0.0;
  double miou_unseen = 0.0;
  double hiou_value = 0.0;
  std::uint64_t tp_unseen = 0;
  std::uint64_t fn_seen_to_unseen = 0;
};

inline MetricReport metric_report(const ConfusionMatrix& conf, const SplitSpec& split) {
  MetricReport report;
  for (int id : conf.classes()) {
    double iou = 0.0;
    if (class_iou(conf, id, &iou)) report.per_class_iou[id] = iou;
  }
  report.miou_seen = miou(conf, split.seen);
  report.miou_unseen = miou(conf, split.unseen);
  report.hiou_value = hiou(report.miou_seen, report.miou_unseen);
  const BiasCounters bias = bias_counters(conf, split);
  report.tp_unseen = bias.tp_unseen;
  report.fn_seen_to_unseen = bias.fn_seen_to_unseen;
  return report;
}

enum class CalibrationRule { cs, ac };

inline CalibrationRule parse_rule(const std::string& name) {
  if (name == "cs") return CalibrationRule::cs;
  if (name == "ac") return CalibrationRule::ac;
  fail(ErrorKind::invalid_parameter, "unknown calibration rule `" + name + "`");
}

struct SweepPoint {
  double param = 0.0;
  double miou_seen = 0.0;
  double miou_unseen = 0.0;
  double hiou_value = 0.0;
  std::uint64_t tp_unseen = 0;
  std::uint64_t fn_seen_to_unseen = 0;
};

/// Evaluate one decision rule over a parameter grid. Per-pixel neighbor
/// scans are cached per sample, so adding grid points costs only the
/// decision + accumulation.
inline std::vector<SweepPoint> sweep(const std::vector<FeatureMap>& features,
                                     const std::vector<LabelMask>& masks,
                                     const PrototypeSet& protos,
                                     const SplitSpec& split, CalibrationRule rule,
                                     const std::vector<double>& grid) {
  if (features.size() != masks.size()) {
    fail(ErrorKind::invalid_input, "sweep: feature/mask count mismatch");
  }
  if (grid.empty()) fail(ErrorKind::invalid_input, "sweep: empty parameter grid");
  for (double p : grid) {
    if (rule == CalibrationRule::ac && !(p > 0.0 && p <= 1.0)) {
      fail(ErrorKind::invalid_parameter, "sweep: sigma grid values must be in (0,1]");
    }
    if (rule == CalibrationRule::cs && !std::isfinite(p)) {
      fail(ErrorKind::invalid_parameter, "sweep: gamma grid values must be finite");
    }
  }

  const auto ordered = detail::order_prototypes(protos);
  detail::reject_cross_set_duplicates(ordered, split);

  std::vector<std::vector<detail::PixelNeighbors>> cache(features.size());
  for (std::size_t n = 0; n < features.size(); ++n) {
    const FeatureMap& v = features[n];
    if (v.height != masks[n].height || v.width != masks[n].width) {
      fail(ErrorKind::invalid_input, "sweep: feature/mask dims differ");
    }
    cache[n].reserve(v.pixel_count());
    for (int i = 0; i < v.height; ++i) {
      for (int j = 0; j < v.width; ++j) {
        cache[n].push_back(detail::scan_pixel(v.pixel(i, j), ordered, &split));
      }
    }
  }

  std::vector<SweepPoint> points;
  points.reserve(grid.size());
  for (double param : grid) {
    ConfusionMatrix conf(split.universe_ordered());
    for (std::size_t n = 0; n < features.size(); ++n) {
      const LabelMask& gt = masks[n];
      for (std::size_t k = 0; k < cache[n].size(); ++k) {
        const int pred = rule == CalibrationRule::cs
                             ? detail::cs_decide(cache[n][k], param)
                             : detail::ac_decide(cache[n][k], param, split);
        conf.add(gt.ids[k], pred);
      }
    }
    const MetricReport report = metric_report(conf, split);
    points.push_back({param, report.miou_seen, report.miou_unseen,
                      report.hiou_value, report.tp_unseen,
                      report.fn_seen_to_unseen});
  }
  return points;
}

/// CSV schema: `param,miou_s,miou_u,hiou,tp_u,fn_s_to_u` with a header row.
inline void write_sweep_csv(const std::vector<SweepPoint>& points,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_failure, "cannot write " + path);
  out << "param,miou_s,miou_u,hiou,tp_u,fn_s_to_u\n";
  char buf[160];
  for (const SweepPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%llu,%llu\n",
                  p.param, p.miou_seen, p.miou_unseen, p.hiou_value,
                  static_cast<unsigned long long>(p.tp_unseen),
                  static_cast<unsigned long long>(p.fn_seen_to_unseen));
    out << buf;
  }
}

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) fail(ErrorKind::invalid_input, "mean: empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace joem
