#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "joem/grad_check.hpp"
#include "joem/loss_probe.hpp"
#include "joem/losses.hpp"

#include "oracles.hpp"

using namespace joem;

namespace {

// Smoothed Euclidean distance exactly as the losses define it.
double smooth_dist_ref(const std::vector<double>& a, const std::vector<double>& b) {
  long double sumsq = 0.0L;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const long double d = static_cast<long double>(a[k]) - b[k];
    sumsq += d * d;
  }
  return static_cast<double>(
      std::sqrt(sumsq + static_cast<long double>(kDistanceEps) * kDistanceEps) -
      kDistanceEps);
}

// Direct per-pixel softmax/NLL evaluation, no max subtraction.
double ce_oracle(const FeatureMap& v, const ClassifierWeights& w, const LabelMask& y,
                 const SplitSpec& split) {
  const std::vector<int> seen = split.seen_ordered();
  long double total = 0.0L;
  std::size_t count = 0;
  for (int i = 0; i < y.height; ++i) {
    for (int j = 0; j < y.width; ++j) {
      long double denom = 0.0L;
      long double hit = 0.0L;
      for (int id : seen) {
        long double z = 0.0L;
        for (int c = 0; c < v.channels; ++c) z += static_cast<long double>(w.at(id)[c]) * v.at(i, j, c);
        denom += std::exp(z);
        if (id == y.at(i, j)) hit = std::exp(z);
      }
      total += -std::log(hit / denom);
      ++count;
    }
  }
  return static_cast<double>(total / count);
}

// Composition oracle for the BAR loss: oracle resampling -> stacked map ->
// scalar affine encode -> smoothed distance -> masked mean.
double bar_oracle(const FeatureMap& v, const LabelMask& y, const SemanticTable& table,
                  const SemanticEncoderParams& enc, const SplitSpec& split, int r) {
  const LabelMask small = joem_test::nn_downsample_oracle(y, r);
  FeatureMap stacked(small.height, small.width, table.dim());
  for (int i = 0; i < small.height; ++i) {
    for (int j = 0; j < small.width; ++j) {
      const auto& vec = table.vector(small.at(i, j));
      for (int d = 0; d < table.dim(); ++d) stacked.at(i, j, d) = vec[d];
    }
  }
  const FeatureMap up =
      joem_test::bilinear_resize_oracle(stacked, small.height * r, small.width * r);
  long double total = 0.0L;
  std::size_t count = 0;
  for (int i = 0; i < y.height; ++i) {
    for (int j = 0; j < y.width; ++j) {
      if (!split.is_seen(y.at(i, j))) continue;
      std::vector<double> proto(enc.out_dim), vp(enc.out_dim);
      for (int c = 0; c < enc.out_dim; ++c) {
        long double acc = enc.bias[c];
        for (int d = 0; d < enc.in_dim; ++d) acc += static_cast<long double>(enc.w(d, c)) * up.at(i, j, d);
        proto[c] = static_cast<double>(acc);
        vp[c] = v.at(i, j, c);
      }
      total += smooth_dist_ref(vp, proto);
      ++count;
    }
  }
  return static_cast<double>(total / count);
}

// Scalar double-sum KL oracle with its own softmax over smoothed distances.
double sc_oracle(const SemanticTable& table, const SemanticEncoderParams& enc,
                 const SplitSpec& split, double tau_s, double tau_mu) {
  const std::vector<int> seen = split.seen_ordered();
  const int k = static_cast<int>(seen.size());
  std::vector<std::vector<double>> sem(k), mu(k);
  for (int i = 0; i < k; ++i) {
    sem[i] = table.vector(seen[i]);
    mu[i] = encode_semantic(enc, sem[i]);
  }
  auto rel = [&](const std::vector<std::vector<double>>& xs, double tau, int i, int j) {
    long double denom = 0.0L;
    for (int m = 0; m < k; ++m) {
      if (m == i) continue;
      denom += std::exp(static_cast<long double>(-tau) * smooth_dist_ref(xs[i], xs[m]));
    }
    return static_cast<double>(
        std::exp(static_cast<long double>(-tau) * smooth_dist_ref(xs[i], xs[j])) / denom);
  };
  long double total = 0.0L;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      const double rij = rel(sem, tau_s, i, j);
      const double rhat = rel(mu, tau_mu, i, j);
      total += static_cast<long double>(rij) * std::log(rij / rhat);
    }
  }
  return static_cast<double>(total);
}

TEST(CeLoss, UniformLogitsGiveLogS) {
  const LossProbe probe = make_loss_probe(1);
  ClassifierWeights zero = probe.w;
  for (auto& [_, wc] : zero.entries) std::fill(wc.begin(), wc.end(), 0.0);
  const LossValue value = ce_loss(probe.v, zero, probe.y, probe.split);
  EXPECT_NEAR(value.value, std::log(static_cast<double>(probe.split.seen.size())), 1e-12);
}

TEST(CeLoss, MarginMonotonicity) {
  SplitSpec split = make_split(3, {});
  FeatureMap v(1, 1, 3);
  v.at(0, 0, 1) = 1.0;  // feature aligned with class 1
  LabelMask y(1, 1, 1);
  double previous = std::log(3.0);
  for (double margin : {0.5, 1.0, 2.0, 4.0}) {
    ClassifierWeights w;
    for (int c = 0; c < 3; ++c) {
      std::vector<double> wc(3, 0.0);
      wc[c] = margin;
      w.insert(c, wc);
    }
    const LossValue value = ce_loss(v, w, y, split);
    EXPECT_LT(value.value, std::log(3.0));
    EXPECT_LT(value.value, previous);
    previous = value.value;
  }
}

TEST(CeLoss, MatchesScalarOracle) {
  Rng rng(23);
  SplitSpec split = make_split(4, {});
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureMap v = joem_test::random_map(rng, 3, 3, 4, 0.8);
    const LabelMask y = joem_test::random_mask(rng, 3, 3, {0, 1, 2, 3});
    ClassifierWeights w;
    for (int c = 0; c < 4; ++c) {
      std::vector<double> wc(4);
      for (double& x : wc) x = 0.8 * rng.normal();
      w.insert(c, wc);
    }
    const LossValue value = ce_loss(v, w, y, split);
    EXPECT_NEAR(value.value, ce_oracle(v, w, y, split), 1e-12);
  }
}

TEST(CeLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const LossProbe probe = make_loss_probe(seed);
    const GradCheckResult res =
        grad_check(make_loss_closure(probe, ProbeLoss::ce), pack_loss_probe(probe), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-6) << "seed " << seed;
  }
}

TEST(CeLoss, PerPixelLogitGradientsSumToZero) {
  const LossProbe probe = make_loss_probe(4);
  const LossValue value = ce_loss(probe.v, probe.w, probe.y, probe.split);
  // Summing d/dw_c over classes telescopes the per-pixel (softmax - onehot)
  // rows, which must each sum to zero.
  std::vector<double> acc(probe.v.channels, 0.0);
  for (const auto& [_, g] : value.grad.classifier) {
    for (int c = 0; c < probe.v.channels; ++c) acc[c] += g[c];
  }
  for (double x : acc) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(CeLoss, UnseenIdRejected) {
  LossProbe probe = make_loss_probe(5);
  probe.y.at(0, 0) = probe.split.unseen_ordered().front();
  try {
    ce_loss(probe.v, probe.w, probe.y, probe.split);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_label);
  }
}

TEST(CeLoss, SingleSeenClassIsDegenerateZero) {
  SplitSpec split;
  split.seen = {0};
  split.background = 0;
  FeatureMap v(2, 2, 3, 0.5);
  LabelMask y(2, 2, 0);
  ClassifierWeights w;
  w.insert(0, {1.0, 2.0, 3.0});
  const LossValue value = ce_loss(v, w, y, split);
  EXPECT_EQ(value.value, 0.0);
  EXPECT_TRUE(value.degenerate);
  for (double g : value.grad.visual.values) EXPECT_EQ(g, 0.0);
}

TEST(CenterLoss, ZeroWhenFeaturesSitOnPrototypes) {
  const LossProbe probe = make_loss_probe(6);
  FeatureMap v = probe.v;
  for (int i = 0; i < v.height; ++i) {
    for (int j = 0; j < v.width; ++j) {
      const std::vector<double> mu =
          encode_semantic(probe.enc, probe.table.vector(probe.y.at(i, j)));
      for (int c = 0; c < v.channels; ++c) v.at(i, j, c) = mu[c];
    }
  }
  const LossValue value = center_loss(v, probe.y, probe.table, probe.enc, probe.split);
  EXPECT_EQ(value.value, 0.0);
}

TEST(CenterLoss, ThreeFourFivePixel) {
  SemanticTable table(2);
  table.insert(0, {0.0, 0.0});
  SemanticEncoderParams enc(2, 2);
  enc.w(0, 0) = enc.w(1, 1) = 1.0;
  SplitSpec split;
  split.seen = {0};
  FeatureMap v(1, 1, 2);
  v.at(0, 0, 0) = 3.0;
  v.at(0, 0, 1) = 4.0;
  LabelMask y(1, 1, 0);
  const LossValue value = center_loss(v, y, table, enc, split);
  EXPECT_NEAR(value.value, 5.0, 1e-7);
}

TEST(CenterLoss, EqualsBarAtFactorOneBitwise) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LossProbe probe = make_loss_probe(seed);
    const LossValue center =
        center_loss(probe.v, probe.y, probe.table, probe.enc, probe.split);
    const LossValue bar =
        bar_loss(probe.v, probe.y, probe.table, probe.enc, probe.split, 1);
    EXPECT_EQ(center.value, bar.value);
    EXPECT_EQ(center.grad.visual.values, bar.grad.visual.values);
    EXPECT_EQ(center.grad.encoder_weight, bar.grad.encoder_weight);
    EXPECT_EQ(center.grad.encoder_bias, bar.grad.encoder_bias);
  }
}

TEST(BarLoss, ConstantMaskEqualsCenterForAnyFactor) {
  LossProbe probe = make_loss_probe(7, 8, 8);
  std::fill(probe.y.ids.begin(), probe.y.ids.end(), 2);
  const LossValue center =
      center_loss(probe.v, probe.y, probe.table, probe.enc, probe.split);
  for (int r : {2, 4}) {
    const LossValue bar =
        bar_loss(probe.v, probe.y, probe.table, probe.enc, probe.split, r);
    EXPECT_EQ(bar.value, center.value);
    EXPECT_EQ(bar.grad.visual.values, center.grad.visual.values);
  }
}

TEST(BarLoss, ZeroWhenFeaturesSitOnVirtualPrototypes) {
  const LossProbe probe = make_loss_probe(8, 8, 8);
  const FeatureMap smap = interpolated_semantic_map(probe.y, probe.table, 4);
  FeatureMap v = probe.v;
  for (int i = 0; i < v.height; ++i) {
    for (int j = 0; j < v.width; ++j) {
      std::vector<double> s(probe.table.dim());
      for (int d = 0; d < probe.table.dim(); ++d) s[d] = smap.at(i, j, d);
      const std::vector<double> mu = encode_semantic(probe.enc, s);
      for (int c = 0; c < v.channels; ++c) v.at(i, j, c) = mu[c];
    }
  }
  const LossValue value = bar_loss(v, probe.y, probe.table, probe.enc, probe.split, 4);
  EXPECT_NEAR(value.value, 0.0, 1e-12);
}

TEST(BarLoss, TwoRegionMaskMatchesCompositionOracle) {
  Rng rng(29);
  const int n = 16;
  SplitSpec split = make_split(3, {2});
  const SemanticTable table = joem_test::random_table(rng, 3, 5);
  SemanticEncoderParams enc(5, 4);
  for (double& w : enc.weight) w = rng.normal();
  for (double& b : enc.bias) b = rng.normal();
  LabelMask y(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) y.at(i, j) = i < n / 2 ? 0 : 1;
  }
  const FeatureMap v = joem_test::random_map(rng, n, n, 4);
  const LossValue value = bar_loss(v, y, table, enc, split, 4);
  EXPECT_NEAR(value.value, bar_oracle(v, y, table, enc, split, 4), 1e-12);
}

TEST(BarLoss, GradientMatchesFiniteDifferences) {
  for (int r : {1, 2, 4}) {
    const LossProbe probe = make_loss_probe(100 + r, 8, 8);
    const GradCheckResult res = grad_check(
        make_loss_closure(probe, ProbeLoss::bar, r), pack_loss_probe(probe), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-6) << "r=" << r;
  }
}

TEST(BarLoss, InvariantToNonSeenPixels) {
  Rng rng(31);
  SplitSpec split = make_split(4, {3});
  const SemanticTable table = joem_test::random_table(rng, 4, 5);
  SemanticEncoderParams enc(5, 3);
  for (double& w : enc.weight) w = rng.normal();
  LabelMask y(8, 8);
  for (int& id : y.ids) id = rng.uniform_int(0, 4);  // includes unseen class 3
  FeatureMap v = joem_test::random_map(rng, 8, 8, 3);
  const LossValue base = bar_loss(v, y, table, enc, split, 2);
  // Perturb v only at non-seen pixels: the loss and gradients must not move.
  FeatureMap v2 = v;
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      if (!split.is_seen(y.at(i, j))) {
        for (int c = 0; c < 3; ++c) v2.at(i, j, c) += rng.normal();
      }
    }
  }
  const LossValue moved = bar_loss(v2, y, table, enc, split, 2);
  EXPECT_EQ(moved.value, base.value);
  EXPECT_EQ(moved.grad.encoder_weight, base.grad.encoder_weight);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      if (!split.is_seen(y.at(i, j))) {
        for (int c = 0; c < 3; ++c) EXPECT_EQ(base.grad.visual.at(i, j, c), 0.0);
      }
    }
  }
}

TEST(BarLoss, AllNonSeenPixelsIsUndefined) {
  Rng rng(37);
  SplitSpec split = make_split(3, {2});
  const SemanticTable table = joem_test::random_table(rng, 3, 4);
  SemanticEncoderParams enc(4, 2);
  LabelMask y(2, 2, 2);  // every pixel unseen
  const FeatureMap v = joem_test::random_map(rng, 2, 2, 2);
  try {
    bar_loss(v, y, table, enc, split, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::undefined_loss);
  }
}

TEST(ScLoss, MatchedRelationsGiveZero) {
  Rng rng(41);
  const int dim = 4;
  SemanticTable table = joem_test::random_table(rng, 5, dim);
  SplitSpec split = make_split(5, {});
  // Scaled identity encoder with tau_mu * scale = tau_s reproduces the
  // semantic relations exactly; a bias offsets every prototype equally and
  // cancels out of the pairwise distances.
  const double scale = 2.5;
  SemanticEncoderParams enc(dim, dim);
  for (int d = 0; d < dim; ++d) enc.w(d, d) = scale;
  for (double& b : enc.bias) b = rng.normal();
  const double tau_s = 5.0;
  const double tau_mu = tau_s / scale;
  const LossValue value = sc_loss(table, enc, split, tau_s, tau_mu);
  EXPECT_GE(value.value, 0.0);
  EXPECT_LT(value.value, 1e-12);
}

TEST(ScLoss, NonNegativeOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const LossProbe probe = make_loss_probe(seed);
    const LossValue value =
        sc_loss(probe.table, probe.enc, probe.split, probe.tau_s, probe.tau_mu);
    EXPECT_GE(value.value, 0.0);
  }
}

TEST(ScLoss, MatchesDoubleSumOracle) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const LossProbe probe = make_loss_probe(seed);
    const LossValue value =
        sc_loss(probe.table, probe.enc, probe.split, probe.tau_s, probe.tau_mu);
    EXPECT_NEAR(value.value,
                sc_oracle(probe.table, probe.enc, probe.split, probe.tau_s, probe.tau_mu),
                1e-12);
  }
}

TEST(ScLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    const LossProbe probe = make_loss_probe(seed);
    const GradCheckResult res =
        grad_check(make_loss_closure(probe, ProbeLoss::sc), pack_loss_probe(probe), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-6) << "seed " << seed;
  }
}

TEST(ScLoss, FewerThanTwoSeenClassesRejected) {
  Rng rng(43);
  const SemanticTable table = joem_test::random_table(rng, 2, 3);
  SemanticEncoderParams enc(3, 2);
  SplitSpec split;
  split.seen = {0};
  try {
    sc_loss(table, enc, split, 5.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
  }
  SplitSpec two = make_split(2, {});
  try {
    sc_loss(table, enc, two, -1.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
  }
}

TEST(TotalLoss, LambdaZeroDropsSc) {
  const LossProbe probe = make_loss_probe(51);
  const LossValue ce = ce_loss(probe.v, probe.w, probe.y, probe.split);
  const LossValue bar = bar_loss(probe.v, probe.y, probe.table, probe.enc, probe.split, 2);
  const LossValue sc = sc_loss(probe.table, probe.enc, probe.split, probe.tau_s, probe.tau_mu);
  const LossValue total = total_loss(ce, bar, sc, 0.0);
  EXPECT_DOUBLE_EQ(total.value, ce.value + bar.value);
  for (std::size_t k = 0; k < total.grad.encoder_weight.size(); ++k) {
    EXPECT_EQ(total.grad.encoder_weight[k], bar.grad.encoder_weight[k]);
  }
}

TEST(TotalLoss, WeightedArithmetic) {
  const LossProbe probe = make_loss_probe(52);
  const LossValue ce = ce_loss(probe.v, probe.w, probe.y, probe.split);
  const LossValue bar = bar_loss(probe.v, probe.y, probe.table, probe.enc, probe.split, 4);
  const LossValue sc = sc_loss(probe.table, probe.enc, probe.split, probe.tau_s, probe.tau_mu);
  const double lambda = 0.7;
  const LossValue total = total_loss(ce, bar, sc, lambda);
  EXPECT_NEAR(total.value, ce.value + bar.value + lambda * sc.value, 1e-15);
  for (std::size_t k = 0; k < total.grad.visual.values.size(); ++k) {
    EXPECT_NEAR(total.grad.visual.values[k],
                ce.grad.visual.values[k] + bar.grad.visual.values[k], 1e-15);
  }
  for (std::size_t k = 0; k < total.grad.encoder_weight.size(); ++k) {
    EXPECT_NEAR(total.grad.encoder_weight[k],
                bar.grad.encoder_weight[k] + lambda * sc.grad.encoder_weight[k], 1e-15);
  }
}

TEST(TotalLoss, CompositeGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {61u, 62u}) {
    const LossProbe probe = make_loss_probe(seed);
    const GradCheckResult res = grad_check(
        make_loss_closure(probe, ProbeLoss::total, 4), pack_loss_probe(probe), 1e-5);
    EXPECT_LT(res.max_rel_error, 1e-5) << "seed " << seed;
  }
}

TEST(GradCheck, QuadraticSelfTest) {
  const LossClosure quadratic = [](const std::vector<double>& x,
                                   std::vector<double>* grad) {
    double value = 0.0;
    if (grad) grad->assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      value += 0.5 * x[i] * x[i];
      if (grad) (*grad)[i] = x[i];
    }
    return value;
  };
  Rng rng(71);
  std::vector<double> x = rng.normal_vector(24);
  const GradCheckResult res = grad_check(quadratic, x, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-8);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  const LossClosure corrupted = [](const std::vector<double>& x,
                                   std::vector<double>* grad) {
    double value = 0.0;
    if (grad) grad->assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      value += 0.5 * x[i] * x[i];
      if (grad) (*grad)[i] = x[i] * (i == 3 ? 1.5 : 1.0);
    }
    return value;
  };
  Rng rng(73);
  std::vector<double> x = rng.normal_vector(8);
  x[3] = 1.0;
  const GradCheckResult res = grad_check(corrupted, x, 1e-5);
  EXPECT_GT(res.max_rel_error, 1e-2);
  EXPECT_EQ(res.worst_index, 3u);
}

}  // namespace
