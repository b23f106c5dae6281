// Minimal end-to-end walkthrough: generate a tiny benchmark, train the joint
// embedding for a few epochs, and compare the NN and AC decision rules.

#include <cstdio>

#include "joem/joem.hpp"

using namespace joem;

int main() {
  SceneSpec scene;
  scene.height = scene.width = 32;
  scene.regions_per_scene = 5;
  scene.min_region_area = 8;
  scene.seed = 7;

  const int num_classes = 8;
  const SemanticTable table = gen_semantic_table(num_classes, 12, scene.seed);
  const SplitSpec split = make_split(num_classes, {6, 7});
  const Benchmark bench = make_benchmark(scene, table, split, 40, 10);

  TrainConfig config;
  config.epochs = 10;
  config.embed_dim = 12;
  config.hidden = {10};
  config.seed = scene.seed;
  const TrainResult result = train(config, bench.train, table, split);
  std::printf("final total loss: %.4f, seen NN accuracy: %.3f\n",
              result.log.back().total, result.seen_nn_accuracy);

  const PrototypeSet protos =
      encode_prototype_set(result.model.encoder, table, split.universe_ordered());
  std::vector<FeatureMap> feats;
  std::vector<LabelMask> masks;
  for (const Sample& sample : bench.test) {
    feats.push_back(visual_forward(result.model.visual, sample.image));
    masks.push_back(sample.mask);
  }

  ConfusionMatrix conf_nn(split.universe_ordered());
  ConfusionMatrix conf_ac(split.universe_ordered());
  for (std::size_t n = 0; n < feats.size(); ++n) {
    accumulate(conf_nn, nn_classify(feats[n], protos), masks[n]);
    accumulate(conf_ac, ac_classify(feats[n], protos, split, 0.75), masks[n]);
  }
  const MetricReport nn = metric_report(conf_nn, split);
  const MetricReport ac = metric_report(conf_ac, split);
  std::printf("NN : mIoU_S %.3f  mIoU_U %.3f  hIoU %.3f\n", nn.miou_seen,
              nn.miou_unseen, nn.hiou_value);
  std::printf("AC : mIoU_S %.3f  mIoU_U %.3f  hIoU %.3f\n", ac.miou_seen,
              ac.miou_unseen, ac.hiou_value);
  return 0;
}
