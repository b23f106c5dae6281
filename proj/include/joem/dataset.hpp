#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "joem/error.hpp"
#include "joem/feature_map.hpp"
#include "joem/pgm.hpp"
#include "joem/rng.hpp"
#include "joem/semantic.hpp"
#include "joem/split.hpp"
#include "joem/tensor_file.hpp"

#include "json.hpp"

namespace joem {

/// One benchmark scene: a multi-channel input image and its label mask.
struct Sample {
  FeatureMap image;
  LabelMask mask;
};

/// Synthetic scene generator parameters.
struct SceneSpec {
  int height = 64;
  int width = 64;
  int input_channels = 6;
  int regions_per_scene = 7;
  int min_region_area = 24;
  double noise = 0.35;       // i.i.d. per-pixel noise amplitude
  double distortion = 0.5;   // per-class fixed appearance offset amplitude
  bool voronoi = true;       // false: random axis-aligned rectangles
  std::uint64_t seed = 1;

  void validate() const {
    if (height <= 0 || width <= 0) fail(ErrorKind::invalid_parameter, "SceneSpec: size must be positive");
    if (input_channels <= 0) fail(ErrorKind::invalid_parameter, "SceneSpec: channels must be positive");
    if (regions_per_scene < 1) fail(ErrorKind::invalid_parameter, "SceneSpec: need >= 1 region");
    if (min_region_area < 0) fail(ErrorKind::invalid_parameter, "SceneSpec: min area must be >= 0");
    if (noise < 0.0 || distortion < 0.0) {
      fail(ErrorKind::invalid_parameter, "SceneSpec: noise/distortion must be >= 0");
    }
  }
};

/// Unit-norm random semantic vectors with a controlled similarity structure.
///
/// Vectors are drawn from a shared low-rank latent factor model (word2vec
/// embeddings likewise concentrate near a low-dimensional manifold), which
/// keeps every class inside the span of a handful of others — the property
/// that makes zero-shot transfer possible at all. On top of that, classes
/// 4k+1 and 4k+2 form deliberately close pairs so both the distant- and
/// close-prototype calibration regimes occur.
inline SemanticTable gen_semantic_table(int num_classes, int dim,
                                        std::uint64_t seed, int latent_rank = 0) {
  if (num_classes < 1) fail(ErrorKind::invalid_parameter, "gen_semantic_table: need >= 1 class");
  if (dim < 2) fail(ErrorKind::invalid_parameter, "gen_semantic_table: need dim >= 2");
  if (latent_rank == 0) latent_rank = std::min(dim, std::max(2, num_classes / 2));
  if (latent_rank < 1 || latent_rank > dim) {
    fail(ErrorKind::invalid_parameter, "gen_semantic_table: bad latent rank");
  }
  Rng rng = Rng::substream(seed, 0x7ab1e);
  SemanticTable table(dim);
  auto normalize = [](std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  };
  // Latent-to-semantic factor matrix, then per-class latent codes.
  std::vector<double> factors(static_cast<std::size_t>(dim) * latent_rank);
  for (double& f : factors) f = rng.normal();
  std::vector<std::vector<double>> vecs(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    const std::vector<double> code = rng.normal_vector(latent_rank);
    vecs[c].assign(dim, 0.0);
    for (int d = 0; d < dim; ++d) {
      const double* row = factors.data() + static_cast<std::size_t>(d) * latent_rank;
      for (int k = 0; k < latent_rank; ++k) vecs[c][d] += row[k] * code[k];
    }
    normalize(vecs[c]);
  }
  const double closeness = 0.4;
  for (int k = 0; 4 * k + 2 < num_classes; ++k) {
    const int a = 4 * k + 1;
    const int b = 4 * k + 2;
    std::vector<double> jitter = rng.normal_vector(dim);
    normalize(jitter);
    for (int d = 0; d < dim; ++d) vecs[b][d] = vecs[a][d] + closeness * jitter[d];
    normalize(vecs[b]);
  }
  for (int c = 0; c < num_classes; ++c) {
    table.insert(c, std::move(vecs[c]), c == 0 ? "background" : "class_" + std::to_string(c));
  }
  return table;
}

namespace detail {

/// Fixed appearance model mapping semantics to pixel signal. Derived purely
/// from the scene seed so train and test scenes share one mixer; never
/// exposed to the model.
struct AppearanceMixer {
  std::vector<double> mixing;                    // input_channels x D
  std::vector<std::vector<double>> distortions;  // per class id

  AppearanceMixer(const SceneSpec& spec, const SemanticTable& table) {
    Rng rng = Rng::substream(spec.seed, 0x0a15);
    const int d = table.dim();
    mixing.resize(static_cast<std::size_t>(spec.input_channels) * d);
    // Unit-variance rows: semantic vectors are unit-norm, so the clean
    // per-channel signal has variance ~1 and the noise/distortion knobs are
    // fractions of the signal scale.
    for (double& m : mixing) m = rng.normal();
    int max_id = 0;
    for (int id : table.ids()) max_id = std::max(max_id, id);
    distortions.resize(max_id + 1);
    for (int id = 0; id <= max_id; ++id) {
      distortions[id] = rng.normal_vector(spec.input_channels);
    }
  }

  void signal(const SceneSpec& spec, const std::vector<double>& sem, int class_id,
              std::vector<double>& out) const {
    const int d = static_cast<int>(sem.size());
    out.assign(spec.input_channels, 0.0);
    for (int ch = 0; ch < spec.input_channels; ++ch) {
      double acc = 0.0;
      const double* row = mixing.data() + static_cast<std::size_t>(ch) * d;
      for (int k = 0; k < d; ++k) acc += row[k] * sem[k];
      out[ch] = acc + spec.distortion * distortions[class_id][ch];
    }
  }
};

struct Site {
  int y = 0;
  int x = 0;
  int class_id = 0;
};

inline LabelMask label_voronoi(const SceneSpec& spec, const std::vector<Site>& sites) {
  LabelMask mask(spec.height, spec.width);
  for (int i = 0; i < spec.height; ++i) {
    for (int j = 0; j < spec.width; ++j) {
      long best = -1;
      std::size_t best_site = 0;
      for (std::size_t s = 0; s < sites.size(); ++s) {
        const long dy = i - sites[s].y;
        const long dx = j - sites[s].x;
        const long d2 = dy * dy + dx * dx;
        if (best < 0 || d2 < best) {
          best = d2;
          best_site = s;
        }
      }
      mask.at(i, j) = sites[best_site].class_id;
    }
  }
  return mask;
}

inline LabelMask label_rectangles(const SceneSpec& spec, const std::vector<Site>& sites,
                                  Rng& rng) {
  // First site's class paints the canvas; later rectangles stack on top.
  LabelMask mask(spec.height, spec.width, sites.front().class_id);
  for (std::size_t s = 1; s < sites.size(); ++s) {
    const int h = 1 + rng.uniform_int(spec.height / 4, spec.height / 2 + 1);
    const int w = 1 + rng.uniform_int(spec.width / 4, spec.width / 2 + 1);
    const int top = std::min(sites[s].y, spec.height - h);
    const int left = std::min(sites[s].x, spec.width - w);
    for (int i = std::max(0, top); i < std::min(spec.height, top + h); ++i) {
      for (int j = std::max(0, left); j < std::min(spec.width, left + w); ++j) {
        mask.at(i, j) = sites[s].class_id;
      }
    }
  }
  return mask;
}

}  // namespace detail

/// Generate one labeled scene. The canvas is partitioned into regions
/// (Voronoi cells by default), each region's pixels carry
/// signal = A * s_c + distortion_c + noise, so appearance is a noisy,
/// distorted, but consistent function of class semantics.
inline Sample gen_scene(const SceneSpec& spec, const SemanticTable& table,
                        const std::vector<int>& classes, Rng& rng) {
  spec.validate();
  if (classes.empty()) fail(ErrorKind::invalid_input, "gen_scene: empty class set");
  for (int id : classes) {
    if (!table.contains(id)) {
      fail(ErrorKind::unknown_class,
           "gen_scene: class " + std::to_string(id) + " has no semantic vector");
    }
  }
  const detail::AppearanceMixer mixer(spec, table);

  const int max_attempts = 64;
  LabelMask mask;
  for (int attempt = 0;; ++attempt) {
    std::vector<detail::Site> sites(spec.regions_per_scene);
    for (auto& site : sites) {
      site.y = rng.uniform_int(0, spec.height);
      site.x = rng.uniform_int(0, spec.width);
      site.class_id = classes[rng.uniform_index(classes.size())];
    }
    mask = spec.voronoi ? detail::label_voronoi(spec, sites)
                        : detail::label_rectangles(spec, sites, rng);
    // Every class present in the mask must cover at least the minimum area.
    std::map<int, int> areas;
    for (int id : mask.ids) ++areas[id];
    bool ok = true;
    for (const auto& [_, area] : areas) {
      if (area < spec.min_region_area) {
        ok = false;
        break;
      }
    }
    if (ok) break;
    if (attempt + 1 >= max_attempts) {
      fail(ErrorKind::invalid_parameter,
           "gen_scene: could not satisfy min_region_area after " +
               std::to_string(max_attempts) + " attempts");
    }
  }

  Sample sample;
  sample.mask = mask;
  sample.image = FeatureMap(spec.height, spec.width, spec.input_channels);
  std::vector<double> signal;
  std::map<int, std::vector<double>> signal_cache;
  for (int i = 0; i < spec.height; ++i) {
    for (int j = 0; j < spec.width; ++j) {
      const int id = mask.at(i, j);
      auto it = signal_cache.find(id);
      if (it == signal_cache.end()) {
        mixer.signal(spec, table.vector(id), id, signal);
        it = signal_cache.emplace(id, signal).first;
      }
      double* px = sample.image.pixel(i, j);
      for (int ch = 0; ch < spec.input_channels; ++ch) {
        px[ch] = it->second[ch] + spec.noise * rng.normal();
      }
    }
  }
  return sample;
}

struct Benchmark {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Train scenes draw classes from the seen set only (hard guarantee); test
/// scenes always contain at least one seen and one unseen region, the
/// generalized zero-shot setting.
inline Benchmark make_benchmark(const SceneSpec& spec, const SemanticTable& table,
                                const SplitSpec& split, int n_train, int n_test) {
  if (n_train < 0 || n_test < 0) {
    fail(ErrorKind::invalid_parameter, "make_benchmark: sample counts must be >= 0");
  }
  split.validate();
  const std::vector<int> seen = split.seen_ordered();
  const std::vector<int> universe = split.universe_ordered();

  Benchmark bench;
  bench.train.reserve(n_train);
  for (int n = 0; n < n_train; ++n) {
    Rng rng = Rng::substream(spec.seed, 1000003ull + n);
    bench.train.push_back(gen_scene(spec, table, seen, rng));
  }
  bench.test.reserve(n_test);
  for (int n = 0; n < n_test; ++n) {
    Rng rng = Rng::substream(spec.seed, 2000003ull + n);
    for (int attempt = 0;; ++attempt) {
      Sample sample = gen_scene(spec, table, universe, rng);
      bool has_seen = false, has_unseen = false;
      for (int id : sample.mask.ids) {
        if (split.is_seen(id)) has_seen = true;
        if (split.is_unseen(id)) has_unseen = true;
      }
      if (has_seen && has_unseen) {
        bench.test.push_back(std::move(sample));
        break;
      }
      if (attempt >= 200) {
        fail(ErrorKind::invalid_parameter,
             "make_benchmark: could not draw a mixed seen/unseen test scene");
      }
    }
  }
  return bench;
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/meta.json, <dir>/semantic_table.txt,
// <dir>/{train,test}/sample_NNNN.{bin,pgm}. Feature files reuse the
// checkpoint tensor container with a single tensor named "image".

namespace detail {

inline std::string sample_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sample_%04d", index);
  return buf;
}

inline void write_sample(const std::filesystem::path& dir, int index,
                         const Sample& sample) {
  TensorFile file;
  NamedTensor image;
  image.name = "image";
  image.dims = {static_cast<std::uint64_t>(sample.image.height),
                static_cast<std::uint64_t>(sample.image.width),
                static_cast<std::uint64_t>(sample.image.channels)};
  image.data = sample.image.values;
  file.tensors.push_back(std::move(image));
  const std::string stem = sample_stem(index);
  write_tensor_file((dir / (stem + ".bin")).string(), file);
  write_pgm(sample.mask, (dir / (stem + ".pgm")).string());
}

inline Sample read_sample(const std::filesystem::path& dir, int index) {
  const std::string stem = sample_stem(index);
  const TensorFile file = read_tensor_file((dir / (stem + ".bin")).string());
  const NamedTensor& image = file.require("image");
  if (image.dims.size() != 3) {
    fail(ErrorKind::io_failure, stem + ".bin: image tensor must have rank 3");
  }
  Sample sample;
  sample.image = FeatureMap(static_cast<int>(image.dims[0]),
                            static_cast<int>(image.dims[1]),
                            static_cast<int>(image.dims[2]));
  sample.image.values = image.data;
  sample.mask = read_pgm((dir / (stem + ".pgm")).string());
  if (sample.mask.height != sample.image.height ||
      sample.mask.width != sample.image.width) {
    fail(ErrorKind::io_failure, stem + ": image/mask dimensions disagree");
  }
  return sample;
}

}  // namespace detail

inline nlohmann::json scene_spec_to_json(const SceneSpec& spec) {
  return nlohmann::json{{"height", spec.height},
                        {"width", spec.width},
                        {"input_channels", spec.input_channels},
                        {"regions_per_scene", spec.regions_per_scene},
                        {"min_region_area", spec.min_region_area},
                        {"noise", spec.noise},
                        {"distortion", spec.distortion},
                        {"geometry", spec.voronoi ? "voronoi" : "rectangles"},
                        {"seed", spec.seed}};
}

inline nlohmann::json split_to_json(const SplitSpec& split) {
  return nlohmann::json{{"seen", split.seen_ordered()},
                        {"unseen", split.unseen_ordered()},
                        {"background", split.background}};
}

inline SplitSpec split_from_json(const nlohmann::json& j) {
  SplitSpec split;
  for (int id : j.at("seen").get<std::vector<int>>()) split.seen.insert(id);
  for (int id : j.at("unseen").get<std::vector<int>>()) split.unseen.insert(id);
  split.background = j.at("background").get<int>();
  split.validate();
  return split;
}

/// Write a benchmark to disk. The directory must not already contain a dataset.
inline void save_dataset(const std::string& dir_in, const SceneSpec& spec,
                         const SplitSpec& split, const SemanticTable& table,
                         const Benchmark& bench) {
  namespace fs = std::filesystem;
  const fs::path dir(dir_in);
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "test");
  save_semantic_table(table, (dir / "semantic_table.txt").string());
  for (std::size_t n = 0; n < bench.train.size(); ++n) {
    detail::write_sample(dir / "train", static_cast<int>(n), bench.train[n]);
  }
  for (std::size_t n = 0; n < bench.test.size(); ++n) {
    detail::write_sample(dir / "test", static_cast<int>(n), bench.test[n]);
  }
  nlohmann::json meta{{"format", "joem-dataset-v1"},
                      {"scene", scene_spec_to_json(spec)},
                      {"split", split_to_json(split)},
                      {"n_train", bench.train.size()},
                      {"n_test", bench.test.size()},
                      {"semantic_table", "semantic_table.txt"}};
  std::ofstream out(dir / "meta.json");
  if (!out) fail(ErrorKind::io_failure, "cannot write meta.json in " + dir_in);
  out << meta.dump(2) << '\n';
}

struct DatasetOnDisk {
  SceneSpec spec;
  SplitSpec split;
  SemanticTable table;
  Benchmark bench;
};

inline DatasetOnDisk load_dataset(const std::string& dir_in) {
  namespace fs = std::filesystem;
  const fs::path dir(dir_in);
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) fail(ErrorKind::io_failure, dir_in + ": missing meta.json");
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::io_failure, dir_in + ": bad meta.json: " + e.what());
  }
  if (meta.value("format", "") != "joem-dataset-v1") {
    fail(ErrorKind::io_failure, dir_in + ": unrecognized dataset format");
  }
  DatasetOnDisk ds;
  const nlohmann::json& scene = meta.at("scene");
  ds.spec.height = scene.at("height").get<int>();
  ds.spec.width = scene.at("width").get<int>();
  ds.spec.input_channels = scene.at("input_channels").get<int>();
  ds.spec.regions_per_scene = scene.at("regions_per_scene").get<int>();
  ds.spec.min_region_area = scene.at("min_region_area").get<int>();
  ds.spec.noise = scene.at("noise").get<double>();
  ds.spec.distortion = scene.at("distortion").get<double>();
  ds.spec.voronoi = scene.at("geometry").get<std::string>() == "voronoi";
  ds.spec.seed = scene.at("seed").get<std::uint64_t>();
  ds.split = split_from_json(meta.at("split"));
  ds.table = load_semantic_table((dir / meta.at("semantic_table").get<std::string>()).string());
  const int n_train = meta.at("n_train").get<int>();
  const int n_test = meta.at("n_test").get<int>();
  for (int n = 0; n < n_train; ++n) {
    ds.bench.train.push_back(detail::read_sample(dir / "train", n));
  }
  for (int n = 0; n < n_test; ++n) {
    ds.bench.test.push_back(detail::read_sample(dir / "test", n));
  }
  return ds;
}

}  // namespace joem
