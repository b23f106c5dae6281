#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "joem/dataset.hpp"

using namespace joem;

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return dot / (norm(a) * norm(b));
}

TEST(GenSemanticTable, SingleClassUnitVector) {
  const SemanticTable table = gen_semantic_table(1, 8, 5);
  ASSERT_EQ(table.size(), 1u);
  EXPECT_NEAR(norm(table.vector(0)), 1.0, 1e-9);
}

TEST(GenSemanticTable, AllVectorsUnitNorm) {
  const SemanticTable table = gen_semantic_table(12, 16, 7);
  for (int id : table.ids()) EXPECT_NEAR(norm(table.vector(id)), 1.0, 1e-9);
}

TEST(GenSemanticTable, SeededGenerationReproducible) {
  const SemanticTable a = gen_semantic_table(12, 16, 42);
  const SemanticTable b = gen_semantic_table(12, 16, 42);
  const SemanticTable c = gen_semantic_table(12, 16, 43);
  for (int id : a.ids()) EXPECT_EQ(a.vector(id), b.vector(id));
  EXPECT_NE(a.vector(0), c.vector(0));
}

TEST(GenSemanticTable, ContainsDeliberatelyClosePairs) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const SemanticTable table = gen_semantic_table(12, 16, seed);
    // Pairs (4k+1, 4k+2) are constructed close; others average near zero.
    EXPECT_GT(cosine(table.vector(1), table.vector(2)), 0.8);
    EXPECT_GT(cosine(table.vector(5), table.vector(6)), 0.8);
    EXPECT_GT(cosine(table.vector(9), table.vector(10)), 0.8);
  }
}

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec spec;
  spec.height = spec.width = 24;
  spec.regions_per_scene = 5;
  spec.min_region_area = 6;
  spec.seed = seed;
  return spec;
}

TEST(GenScene, SingleRegionNoNoiseIsConstant) {
  SceneSpec spec = small_spec(3);
  spec.regions_per_scene = 1;
  spec.noise = 0.0;
  spec.distortion = 0.0;
  const SemanticTable table = gen_semantic_table(4, 8, 3);
  Rng rng(9);
  const Sample sample = gen_scene(spec, table, {2}, rng);
  for (int id : sample.mask.ids) EXPECT_EQ(id, 2);
  for (int c = 0; c < spec.input_channels; ++c) {
    const double first = sample.image.at(0, 0, c);
    for (int i = 0; i < spec.height; ++i) {
      for (int j = 0; j < spec.width; ++j) EXPECT_EQ(sample.image.at(i, j, c), first);
    }
  }
}

TEST(GenScene, MaskCoversCanvasWithRequestedClasses) {
  const SceneSpec spec = small_spec(5);
  const SemanticTable table = gen_semantic_table(6, 8, 5);
  Rng rng(11);
  const Sample sample = gen_scene(spec, table, {0, 1, 2, 3}, rng);
  EXPECT_EQ(sample.mask.pixel_count(), spec.height * static_cast<std::size_t>(spec.width));
  const std::set<int> allowed{0, 1, 2, 3};
  for (int id : sample.mask.ids) EXPECT_TRUE(allowed.count(id));
}

TEST(GenScene, AdjacentRegionsShareBoundaries) {
  const SceneSpec spec = small_spec(7);
  const SemanticTable table = gen_semantic_table(6, 8, 7);
  Rng rng(13);
  const Sample sample = gen_scene(spec, table, {0, 1, 2, 3, 4, 5}, rng);
  std::set<int> present(sample.mask.ids.begin(), sample.mask.ids.end());
  if (present.size() < 2) GTEST_SKIP() << "degenerate single-class draw";
  // 4-neighborhood scan: every present class must touch some other class.
  std::map<int, int> boundary_contacts;
  for (int i = 0; i < spec.height; ++i) {
    for (int j = 0; j < spec.width; ++j) {
      const int id = sample.mask.at(i, j);
      if (i + 1 < spec.height && sample.mask.at(i + 1, j) != id) {
        ++boundary_contacts[id];
        ++boundary_contacts[sample.mask.at(i + 1, j)];
      }
      if (j + 1 < spec.width && sample.mask.at(i, j + 1) != id) {
        ++boundary_contacts[id];
        ++boundary_contacts[sample.mask.at(i, j + 1)];
      }
    }
  }
  for (int id : present) EXPECT_GT(boundary_contacts[id], 0) << "class " << id;
}

TEST(GenScene, MinimumAreaRespected) {
  const SceneSpec spec = small_spec(17);
  const SemanticTable table = gen_semantic_table(6, 8, 17);
  Rng rng(17);
  const Sample sample = gen_scene(spec, table, {0, 1, 2, 3, 4, 5}, rng);
  std::map<int, int> areas;
  for (int id : sample.mask.ids) ++areas[id];
  for (const auto& [id, area] : areas) {
    EXPECT_GE(area, spec.min_region_area) << "class " << id;
  }
}

TEST(GenScene, UnsatisfiableAreaConstraintFails) {
  SceneSpec spec = small_spec(19);
  spec.min_region_area = spec.height * spec.width + 1;
  const SemanticTable table = gen_semantic_table(4, 8, 19);
  Rng rng(19);
  try {
    gen_scene(spec, table, {0, 1}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
  }
}

TEST(GenScene, RectangleGeometryAlsoSupported) {
  SceneSpec spec = small_spec(23);
  spec.voronoi = false;
  spec.min_region_area = 1;
  const SemanticTable table = gen_semantic_table(5, 8, 23);
  Rng rng(23);
  const Sample sample = gen_scene(spec, table, {0, 1, 2, 3}, rng);
  const std::set<int> allowed{0, 1, 2, 3};
  for (int id : sample.mask.ids) EXPECT_TRUE(allowed.count(id));
}

TEST(MakeBenchmark, EmptyTrainSetAllowed) {
  const SceneSpec spec = small_spec(29);
  const SemanticTable table = gen_semantic_table(6, 8, 29);
  const SplitSpec split = make_split(6, {4, 5});
  const Benchmark bench = make_benchmark(spec, table, split, 0, 3);
  EXPECT_TRUE(bench.train.empty());
  EXPECT_EQ(bench.test.size(), 3u);
}

TEST(MakeBenchmark, TrainMasksAreSeenOnly) {
  const SceneSpec spec = small_spec(31);
  const SemanticTable table = gen_semantic_table(8, 8, 31);
  const SplitSpec split = make_split(8, {6, 7});
  const Benchmark bench = make_benchmark(spec, table, split, 25, 5);
  for (const Sample& sample : bench.train) {
    for (int id : sample.mask.ids) EXPECT_TRUE(split.is_seen(id));
  }
}

TEST(MakeBenchmark, TestScenesMixSeenAndUnseen) {
  const SceneSpec spec = small_spec(37);
  const SemanticTable table = gen_semantic_table(8, 8, 37);
  const SplitSpec split = make_split(8, {6, 7});
  const Benchmark bench = make_benchmark(spec, table, split, 2, 20);
  int mixed = 0;
  for (const Sample& sample : bench.test) {
    bool has_seen = false, has_unseen = false;
    for (int id : sample.mask.ids) {
      has_seen = has_seen || split.is_seen(id);
      has_unseen = has_unseen || split.is_unseen(id);
    }
    if (has_seen && has_unseen) ++mixed;
  }
  // Configured target is >= 90%; generation enforces 100%.
  EXPECT_EQ(mixed, 20);
}

TEST(MakeBenchmark, PureFunctionOfSpecAndSeed) {
  const SceneSpec spec = small_spec(41);
  const SemanticTable table = gen_semantic_table(6, 8, 41);
  const SplitSpec split = make_split(6, {4, 5});
  const Benchmark a = make_benchmark(spec, table, split, 6, 4);
  const Benchmark b = make_benchmark(spec, table, split, 6, 4);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t n = 0; n < a.train.size(); ++n) {
    EXPECT_EQ(a.train[n].mask.ids, b.train[n].mask.ids);
    EXPECT_EQ(a.train[n].image.values, b.train[n].image.values);
  }
}

TEST(DatasetIo, RoundTripAndByteIdenticalRerun) {
  namespace fs = std::filesystem;
  const SceneSpec spec = small_spec(43);
  const SemanticTable table = gen_semantic_table(6, 8, 43);
  const SplitSpec split = make_split(6, {4, 5});
  const Benchmark bench = make_benchmark(spec, table, split, 4, 3);

  const fs::path dir1 = fs::temp_directory_path() / "joem_ds_a";
  const fs::path dir2 = fs::temp_directory_path() / "joem_ds_b";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  save_dataset(dir1.string(), spec, split, table, bench);
  save_dataset(dir2.string(), spec, split, table, bench);

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  EXPECT_EQ(slurp(dir1 / "meta.json"), slurp(dir2 / "meta.json"));
  EXPECT_EQ(slurp(dir1 / "train" / "sample_0000.pgm"),
            slurp(dir2 / "train" / "sample_0000.pgm"));
  EXPECT_EQ(slurp(dir1 / "train" / "sample_0000.bin"),
            slurp(dir2 / "train" / "sample_0000.bin"));

  const DatasetOnDisk loaded = load_dataset(dir1.string());
  EXPECT_EQ(loaded.split.seen, split.seen);
  EXPECT_EQ(loaded.split.unseen, split.unseen);
  ASSERT_EQ(loaded.bench.train.size(), bench.train.size());
  ASSERT_EQ(loaded.bench.test.size(), bench.test.size());
  for (std::size_t n = 0; n < bench.train.size(); ++n) {
    EXPECT_EQ(loaded.bench.train[n].mask.ids, bench.train[n].mask.ids);
    EXPECT_EQ(loaded.bench.train[n].image.values, bench.train[n].image.values);
  }
  for (int id : table.ids()) EXPECT_EQ(loaded.table.vector(id), table.vector(id));
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

}  // namespace
