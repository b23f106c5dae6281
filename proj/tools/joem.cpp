// joem command-line interface: synthetic benchmark generation, joint
// embedding training, calibrated inference, parameter sweeps, evaluation
// and gradient checking.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "joem/joem.hpp"

#include "CLI11.hpp"

namespace fs = std::filesystem;
using namespace joem;

namespace {

// Commands assemble outputs under a temporary name and rename at the end, so
// a failure never leaves a partial artifact at the target path.
class StagedDir {
 public:
  explicit StagedDir(const fs::path& target)
      : target_(target), staging_(target.string() + ".staging") {
    if (fs::exists(target_)) {
      fail(ErrorKind::io_failure, "output already exists: " + target_.string());
    }
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }

  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

class StagedFile {
 public:
  explicit StagedFile(const fs::path& target)
      : target_(target), staging_(target.string() + ".staging") {
    if (!target.parent_path().empty()) fs::create_directories(target.parent_path());
  }

  ~StagedFile() {
    if (!committed_) {
      std::error_code ec;
      fs::remove(staging_, ec);
    }
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

RunConfig resolve_config(const std::string& config_path,
                         std::optional<std::uint64_t> seed_flag) {
  RunConfig cfg = config_path.empty() ? parse_run_config(nlohmann::json::object())
                                      : load_run_config(config_path);
  if (seed_flag) {
    cfg.seed = *seed_flag;
    cfg.scene.seed = *seed_flag;
    cfg.train.seed = *seed_flag;
  }
  return cfg;
}

std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> grid;
  const auto colon1 = spec.find(':');
  if (colon1 != std::string::npos) {
    const auto colon2 = spec.find(':', colon1 + 1);
    if (colon2 == std::string::npos) {
      fail(ErrorKind::invalid_parameter, "grid spec must be start:step:stop or a comma list");
    }
    const double start = std::stod(spec.substr(0, colon1));
    const double step = std::stod(spec.substr(colon1 + 1, colon2 - colon1 - 1));
    const double stop = std::stod(spec.substr(colon2 + 1));
    if (step <= 0.0) fail(ErrorKind::invalid_parameter, "grid step must be positive");
    // start + k*step avoids accumulated rounding; half-step slack keeps the
    // nominal endpoint on the grid.
    for (long k = 0;; ++k) {
      const double x = start + static_cast<double>(k) * step;
      if (x > stop + step * 0.5) break;
      grid.push_back(x);
    }
  } else {
    std::size_t pos = 0;
    while (pos < spec.size()) {
      const auto comma = spec.find(',', pos);
      const std::string tok = spec.substr(pos, comma == std::string::npos ? std::string::npos
                                                                          : comma - pos);
      if (!tok.empty()) grid.push_back(std::stod(tok));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  if (grid.empty()) fail(ErrorKind::invalid_parameter, "empty parameter grid");
  return grid;
}

LabelMask classify_with_rule(const FeatureMap& v, const PrototypeSet& protos,
                             const SplitSpec& split, const std::string& rule,
                             double param) {
  if (rule == "nn") return nn_classify(v, protos);
  if (rule == "cs") return cs_classify(v, protos, split, param);
  if (rule == "ac") return ac_classify(v, protos, split, param);
  fail(ErrorKind::invalid_parameter, "unknown rule `" + rule + "`");
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_flag) {
  const RunConfig cfg = resolve_config(config_path, seed_flag);
  const SemanticTable table =
      gen_semantic_table(cfg.num_classes, cfg.semantic_dim, cfg.seed);
  const SplitSpec split = cfg.split();
  const Benchmark bench =
      make_benchmark(cfg.scene, table, split, cfg.n_train, cfg.n_test);
  StagedDir staged{fs::path(out_dir)};
  save_dataset(staged.path().string(), cfg.scene, split, table, bench);
  staged.commit();
  std::cout << "wrote " << bench.train.size() << " train / " << bench.test.size()
            << " test samples to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path, std::string log_path,
              std::optional<std::uint64_t> seed_flag,
              std::optional<int> epochs_flag, std::optional<double> lambda_flag,
              std::optional<int> r_flag) {
  RunConfig cfg = resolve_config(config_path, seed_flag);
  if (epochs_flag) cfg.train.epochs = *epochs_flag;
  if (lambda_flag) cfg.train.lambda = *lambda_flag;
  if (r_flag) cfg.train.r = *r_flag;
  cfg.train.validate();

  const DatasetOnDisk ds = load_dataset(data_dir);
  for (std::size_t n = 0; n < ds.bench.train.size(); ++n) {
    for (int id : ds.bench.train[n].mask.ids) {
      if (!ds.split.is_seen(id)) {
        fail(ErrorKind::invalid_label,
             "train sample " + std::to_string(n) + " contains unseen class " +
                 std::to_string(id));
      }
    }
  }

  const TrainResult result = train(cfg.train, ds.bench.train, ds.table, ds.split);
  if (log_path.empty()) log_path = out_path + ".losses.csv";
  {
    StagedFile ckpt{fs::path(out_path)};
    save_checkpoint(result.model, ckpt.path().string());
    StagedFile log{fs::path(log_path)};
    write_loss_log_csv(result.log, log.path().string());
    ckpt.commit();
    log.commit();
  }
  if (!result.log.empty()) {
    const EpochStats& last = result.log.back();
    std::printf("epoch %d: ce=%.4f bar=%.4f sc=%.4f total=%.4f\n", last.epoch,
                last.ce, last.bar, last.sc, last.total);
  }
  std::printf("seen-pixel NN accuracy: %.4f\n", result.seen_nn_accuracy);
  if (result.degenerate_ce) {
    std::cout << "note: |S| = 1, CE loss fixed at 0 by convention\n";
  }
  if (result.diverged) {
    std::cerr << "training diverged (" << result.divergence_note
              << "); last good checkpoint written to " << out_path << "\n";
    return 1;
  }
  std::cout << "checkpoint written to " << out_path << "\n";
  return 0;
}

int cmd_infer(const std::string& config_path, const std::string& checkpoint,
              const std::string& data_dir, std::string rule,
              std::optional<double> param_flag, const std::string& out_dir,
              bool export_csv) {
  RunConfig cfg = resolve_config(config_path, std::nullopt);
  if (!rule.empty()) cfg.rule = rule;
  if (cfg.rule != "nn" && cfg.rule != "cs" && cfg.rule != "ac") {
    fail(ErrorKind::invalid_parameter, "rule must be nn, cs or ac");
  }
  const double param = param_flag ? *param_flag : cfg.rule_param();

  const JointModel model = load_checkpoint(checkpoint);
  const DatasetOnDisk ds = load_dataset(data_dir);
  const PrototypeSet protos =
      encode_prototype_set(model.encoder, ds.table, ds.split.universe_ordered());

  StagedDir staged{fs::path(out_dir)};
  for (std::size_t n = 0; n < ds.bench.test.size(); ++n) {
    const Sample& sample = ds.bench.test[n];
    FeatureMap v = visual_forward(model.visual, sample.image);
    v = upsample_features(v, sample.image.height, sample.image.width);
    const LabelMask pred = classify_with_rule(v, protos, ds.split, cfg.rule, param);
    char name[32];
    std::snprintf(name, sizeof(name), "pred_%04zu", n);
    write_pgm(pred, (staged.path() / (std::string(name) + ".pgm")).string());
    if (export_csv) {
      write_mask_csv(pred, (staged.path() / (std::string(name) + ".csv")).string());
    }
  }
  staged.commit();
  std::cout << "wrote " << ds.bench.test.size() << " prediction masks to " << out_dir
            << "\n";
  return 0;
}

int cmd_sweep(const std::string& checkpoint, const std::string& data_dir,
              const std::string& rule_name, const std::string& grid_spec,
              const std::string& out_csv) {
  const CalibrationRule rule = parse_rule(rule_name);
  const std::vector<double> grid = parse_grid(grid_spec);

  const JointModel model = load_checkpoint(checkpoint);
  const DatasetOnDisk ds = load_dataset(data_dir);
  const PrototypeSet protos =
      encode_prototype_set(model.encoder, ds.table, ds.split.universe_ordered());

  std::vector<FeatureMap> feats;
  std::vector<LabelMask> masks;
  for (const Sample& sample : ds.bench.test) {
    FeatureMap v = visual_forward(model.visual, sample.image);
    feats.push_back(upsample_features(v, sample.image.height, sample.image.width));
    masks.push_back(sample.mask);
  }
  const std::vector<SweepPoint> points =
      sweep(feats, masks, protos, ds.split, rule, grid);
  StagedFile staged{fs::path(out_csv)};
  write_sweep_csv(points, staged.path().string());
  staged.commit();
  std::cout << "wrote " << points.size() << " sweep points to " << out_csv << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& data_dir,
             const std::string& out_csv) {
  const DatasetOnDisk ds = load_dataset(data_dir);
  ConfusionMatrix conf(ds.split.universe_ordered());
  for (std::size_t n = 0; n < ds.bench.test.size(); ++n) {
    char name[32];
    std::snprintf(name, sizeof(name), "pred_%04zu.pgm", n);
    const LabelMask pred = read_pgm((fs::path(pred_dir) / name).string());
    accumulate(conf, pred, ds.bench.test[n].mask);
  }
  const MetricReport report = metric_report(conf, ds.split);
  for (const auto& [id, iou] : report.per_class_iou) {
    std::printf("class %2d (%s): IoU %.4f\n", id, ds.table.name(id).c_str(), iou);
  }
  std::printf("mIoU_S %.4f  mIoU_U %.4f  hIoU %.4f  TP_U %llu  FN_S_to_U %llu\n",
              report.miou_seen, report.miou_unseen, report.hiou_value,
              static_cast<unsigned long long>(report.tp_unseen),
              static_cast<unsigned long long>(report.fn_seen_to_unseen));
  if (!out_csv.empty()) {
    StagedFile staged{fs::path(out_csv)};
    std::ofstream out(staged.path());
    out << "miou_s,miou_u,hiou,tp_u,fn_s_to_u\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%llu,%llu\n", report.miou_seen,
                  report.miou_unseen, report.hiou_value,
                  static_cast<unsigned long long>(report.tp_unseen),
                  static_cast<unsigned long long>(report.fn_seen_to_unseen));
    out << buf;
    out.close();
    staged.commit();
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps, double tol, int instances) {
  // Self-test on a loss with an exact analytic gradient.
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
  Rng rng(seed);
  std::vector<double> x0(16);
  for (double& x : x0) x = rng.normal();
  const GradCheckResult self_test = grad_check(quadratic, x0, eps);
  std::printf("quadratic self-test: max rel error %.3e\n", self_test.max_rel_error);
  if (self_test.max_rel_error > 1e-8) {
    std::cerr << "gradcheck: self-test failed\n";
    return 1;
  }

  struct Case {
    const char* name;
    ProbeLoss loss;
    int r;
  };
  const Case cases[] = {{"ce", ProbeLoss::ce, 1},       {"bar(r=1)", ProbeLoss::bar, 1},
                        {"bar(r=2)", ProbeLoss::bar, 2}, {"bar(r=4)", ProbeLoss::bar, 4},
                        {"sc", ProbeLoss::sc, 1},        {"total", ProbeLoss::total, 4}};
  bool ok = true;
  for (const Case& c : cases) {
    double worst = 0.0;
    for (int n = 0; n < instances; ++n) {
      const LossProbe probe = make_loss_probe(seed + static_cast<std::uint64_t>(n));
      const GradCheckResult res =
          grad_check(make_loss_closure(probe, c.loss, c.r), pack_loss_probe(probe), eps);
      worst = std::max(worst, res.max_rel_error);
    }
    const bool pass = worst <= tol;
    ok = ok && pass;
    std::printf("%-9s max rel error %.3e over %d instances [%s]\n", c.name, worst,
                instances, pass ? "ok" : "FAIL");
  }
  if (!ok) {
    std::cerr << "gradcheck: tolerance " << tol << " exceeded\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joem: joint-embedding generalized zero-shot segmentation"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint, rule, grid_spec;
  std::string pred_dir, log_path, out_csv;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> epochs_flag, r_flag;
  std::optional<double> lambda_flag, param_flag;
  bool export_csv = false;
  std::uint64_t gc_seed = 1;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  int gc_instances = 8;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic benchmark");
  gen->add_option("--config", config_path, "JSON run configuration");
  gen->add_option("--out", out_path, "output dataset directory")->required();
  gen->add_option("--seed", seed_flag, "override the config seed");

  auto* tr = app.add_subcommand("train", "train the joint embedding model");
  tr->add_option("--config", config_path, "JSON run configuration");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--out", out_path, "output checkpoint path")->required();
  tr->add_option("--log", log_path, "loss log CSV (default <out>.losses.csv)");
  tr->add_option("--seed", seed_flag, "override the config seed");
  tr->add_option("--epochs", epochs_flag, "override training epochs");
  tr->add_option("--lambda", lambda_flag, "override the SC weight");
  tr->add_option("--r", r_flag, "override the BAR factor");

  auto* inf = app.add_subcommand("infer", "predict test masks with a decision rule");
  inf->add_option("--config", config_path, "JSON run configuration");
  inf->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  inf->add_option("--data", data_dir, "dataset directory")->required();
  inf->add_option("--rule", rule, "decision rule: nn, cs or ac");
  inf->add_option("--param", param_flag, "rule parameter (gamma or sigma)");
  inf->add_option("--out", out_path, "output prediction directory")->required();
  inf->add_flag("--csv", export_csv, "also export CSV masks");

  auto* sw = app.add_subcommand("sweep", "sweep a calibration parameter grid");
  sw->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  sw->add_option("--data", data_dir, "dataset directory")->required();
  sw->add_option("--rule", rule, "decision rule: cs or ac")->required();
  sw->add_option("--grid", grid_spec, "grid `start:step:stop` or `a,b,c`")->required();
  sw->add_option("--out", out_csv, "output curve CSV")->required();

  auto* ev = app.add_subcommand("eval", "score predictions against the test set");
  ev->add_option("--pred", pred_dir, "prediction directory")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--out", out_csv, "optional metrics CSV");

  auto* gc = app.add_subcommand("gradcheck", "verify analytic gradients");
  gc->add_option("--seed", gc_seed, "instance seed");
  gc->add_option("--eps", gc_eps, "finite-difference step");
  gc->add_option("--tol", gc_tol, "maximum relative error");
  gc->add_option("--instances", gc_instances, "random instances per loss");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path, seed_flag);
    if (tr->parsed()) {
      return cmd_train(config_path, data_dir, out_path, log_path, seed_flag,
                       epochs_flag, lambda_flag, r_flag);
    }
    if (inf->parsed()) {
      return cmd_infer(config_path, checkpoint, data_dir, rule, param_flag, out_path,
                       export_csv);
    }
    if (sw->parsed()) return cmd_sweep(checkpoint, data_dir, rule, grid_spec, out_csv);
    if (ev->parsed()) return cmd_eval(pred_dir, data_dir, out_csv);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_eps, gc_tol, gc_instances);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
