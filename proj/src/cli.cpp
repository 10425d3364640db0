#include "driveflow/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>

#include "driveflow/config.hpp"
#include "driveflow/data.hpp"
#include "driveflow/error.hpp"
#include "driveflow/evaluation.hpp"
#include "driveflow/models.hpp"
#include "driveflow/pointcloud.hpp"
#include "driveflow/training.hpp"
#include "text_util.hpp"

namespace driveflow::cli {

namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

// Named flags override --set.
using Overrides = std::vector<std::pair<std::string, std::string>>;

RunConfig resolve_config(const GlobalOptions& g, const Overrides& flag_overrides) {
  fs::path file = g.config;
  if (file.empty()) {
    if (const char* env = std::getenv("DRIVEFLOW_CONFIG"); env != nullptr && *env != '\0') file = env;
  }
  Overrides all;
  for (const std::string& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    all.emplace_back(std::string(text::trim(s.substr(0, eq))), std::string(text::trim(s.substr(eq + 1))));
  }
  if (g.seed) all.emplace_back("run.seed", std::to_string(*g.seed));
  all.insert(all.end(), flag_overrides.begin(), flag_overrides.end());
  return build_run_config(file, all);
}

struct ProjectFlags {
  std::string cloud, out;
  std::optional<double> hfov, vfov, max_range;
  std::optional<std::size_t> height, width;
};

struct TrainFlags {
  std::string manifest, model, out = ".";
  std::optional<std::size_t> epochs, batch_size;
  std::optional<double> lr, fraction;
};

struct EvalFlags {
  std::string checkpoint, manifest, split = "test", curves = "curves.csv";
  std::optional<double> threshold, fraction;
};

struct PredictFlags {
  std::string checkpoint, image, cloud;
};

template <class T>
void add_override(Overrides& o, const char* key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_floating_point_v<T>) {
    o.emplace_back(key, text::format_double(*v));
  } else {
    o.emplace_back(key, std::to_string(*v));
  }
}

DatasetManifest load_manifest_for(const std::string& path, const RunConfig& cfg) {
  DatasetManifest m = read_manifest(path);
  if (cfg.fraction < 1.0) m = subset_fraction(m, cfg.fraction, cfg.seed);
  return assign_splits(m, cfg.train.train_fraction, cfg.train.val_fraction, cfg.train.test_fraction, cfg.seed);
}

int cmd_generate(const GlobalOptions& g, const std::string& out_dir, std::ostream& out) {
  const RunConfig cfg = resolve_config(g, {});
  const DatasetManifest m = generate_dataset(cfg.scene, cfg.seed, out_dir);
  out << "wrote " << m.records.size() << " samples (" << m.count("train") << " train, " << m.count("val")
      << " val, " << m.count("test") << " test)\n"
      << "manifest=" << (fs::path(out_dir) / "manifest.csv").string() << '\n';
  return kOk;
}

int cmd_project(const GlobalOptions& g, const ProjectFlags& f, std::ostream& out) {
  Overrides o;
  add_override(o, "projection.hfov", f.hfov);
  add_override(o, "projection.vfov", f.vfov);
  add_override(o, "projection.height", f.height);
  add_override(o, "projection.width", f.width);
  add_override(o, "projection.max_range", f.max_range);
  const RunConfig cfg = resolve_config(g, o);
  const ProjectionConfig& proj = cfg.model.input.projection;
  proj.validate();
  const PointCloud cloud = load_cloud(f.cloud);
  const DepthMap map = pcm_project(cloud, proj);
  write_depth_pgm(map, proj, f.out);
  out << "points=" << cloud.size() << '\n'
      << "valid_pixels=" << map.valid_count() << '\n'
      << "depth_map=" << f.out << '\n';
  return kOk;
}

int cmd_train(const GlobalOptions& g, const TrainFlags& f, std::ostream& out) {
  Overrides o;
  if (!f.model.empty()) o.emplace_back("model.kind", f.model);
  add_override(o, "train.epochs", f.epochs);
  add_override(o, "train.batch_size", f.batch_size);
  add_override(o, "train.learning_rate", f.lr);
  add_override(o, "run.fraction", f.fraction);
  const RunConfig cfg = resolve_config(g, o);
  cfg.model.validate();
  cfg.train.validate();

  const DatasetManifest manifest = load_manifest_for(f.manifest, cfg);
  const std::vector<Sample> train_samples = load_samples(manifest, "train");
  const std::vector<Sample> val_samples = load_samples(manifest, "val");
  if (train_samples.empty()) throw IoError(f.manifest + ": no training records");

  const auto train_set = prepare_dataset(cfg.model, train_samples, cfg.seed);
  const auto val_set = prepare_dataset(cfg.model, val_samples, cfg.seed + 1);
  Model model = Model::build(cfg.model, cfg.seed);
  out << "model=" << to_string(cfg.model.kind) << '\n'
      << "parameters=" << model.parameter_count() << '\n'
      << "fused_width=" << cfg.model.fused_width() << '\n'
      << "train_samples=" << train_set.size() << '\n'
      << "val_samples=" << val_set.size() << '\n';

  const TrainResult result = train(model, train_set, val_set, cfg.train);

  std::error_code ec;
  fs::create_directories(f.out, ec);
  if (ec) throw IoError("cannot create output directory " + f.out + ": " + ec.message());
  const fs::path ckpt_path = fs::path(f.out) / "best.ckpt";
  const fs::path history_path = fs::path(f.out) / "history.csv";
  save_checkpoint(result.best, ckpt_path);
  write_history_csv(result.history, history_path);

  const bool qualified = qualifies({result.best.val_angle_mae, result.best.val_speed_mae}, cfg.train);
  out << "steps=" << result.steps << '\n'
      << "best_epoch=" << result.best.epoch << '\n'
      << "best_val_angle_mae=" << text::format_fixed(result.best.val_angle_mae, 6) << '\n'
      << "best_val_speed_mae=" << text::format_fixed(result.best.val_speed_mae, 6) << '\n'
      << "best_qualified=" << (qualified ? "yes" : "no") << '\n'
      << "checkpoint=" << ckpt_path.string() << '\n'
      << "history=" << history_path.string() << '\n';
  return kOk;
}

int cmd_eval(const GlobalOptions& g, const EvalFlags& f, std::ostream& out) {
  Overrides o;
  add_override(o, "eval.report_threshold", f.threshold);
  add_override(o, "run.fraction", f.fraction);
  const RunConfig cfg = resolve_config(g, o);
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const Model model = restore_model(ckpt);

  const DatasetManifest manifest = load_manifest_for(f.manifest, cfg);
  const std::vector<Sample> samples = load_samples(manifest, f.split);
  if (samples.empty()) throw IoError(f.manifest + ": split '" + f.split + "' has no records");
  const auto data = prepare_dataset(ckpt.spec, samples, cfg.seed + 2);

  const double max_speed = ckpt.spec.input.max_speed_kmh;
  std::vector<DrivingBehavior> preds, truths;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Prediction p = model.predict(data[i].input);
    preds.push_back({p.angle_rad, p.speed * max_speed});
    truths.push_back(samples[i].behavior);
  }
  const EvaluationReport report = evaluate_behaviors(preds, truths, max_speed, cfg.eval);
  const AccuracyCurve curves[] = {report.angle_curve, report.speed_curve};
  write_curves_csv(curves, to_string(ckpt.spec.kind), f.curves);
  out << "model=" << to_string(ckpt.spec.kind) << '\n'
      << "split=" << f.split << '\n'
      << format_report(report, cfg.eval) << "curves=" << f.curves << '\n';
  return kOk;
}

int cmd_predict(const GlobalOptions& g, const PredictFlags& f, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(g, {});
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const Model model = restore_model(ckpt);
  const ModelSpec& spec = ckpt.spec;

  Sample sample;
  sample.image = load_image_ppm(f.image);
  const Shape want{spec.image.channels, spec.image.height, spec.image.width};
  if (sample.image.shape() != want) {
    throw DimensionError(f.image + ": image is " + shape_string(sample.image.shape()) +
                         ", checkpoint expects " + shape_string(want));
  }
  if (spec.kind == ModelKind::io) {
    if (!f.cloud.empty()) err << "warning: io model ignores --cloud " << f.cloud << '\n';
  } else {
    if (f.cloud.empty()) throw ConfigError(to_string(spec.kind) + " model needs --cloud");
    sample.cloud = load_cloud(f.cloud);
    if (sample.cloud.empty()) throw IoError(f.cloud + ": point cloud is empty");
  }
  const Prediction p = model.predict(prepare_input(spec, sample, cfg.seed));
  out << "angle_rad=" << text::format_fixed(p.angle_rad, 6) << '\n'
      << "angle_deg=" << text::format_fixed(p.angle_rad * 180.0 / std::numbers::pi, 6) << '\n'
      << "speed_norm=" << text::format_fixed(p.speed, 6) << '\n'
      << "speed_kmh=" << text::format_fixed(p.speed * spec.input.max_speed_kmh, 6) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Driving-policy learning from camera images and LiDAR point clouds", "driveflow"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Config file ([section] key = value); falls back to $DRIVEFLOW_CONFIG");
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (run.seed)");
  app.add_option("--set", g.sets, "Override any config key, e.g. --set train.epochs=5");

  std::string generate_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset and its manifest");
  generate->add_option("--out", generate_out, "Output directory")->required();

  ProjectFlags pf;
  auto* project = app.add_subcommand("project", "Project a point cloud to a 16-bit PGM depth map");
  project->add_option("--cloud", pf.cloud, "Input cloud (ASCII or PCB1)")->required();
  project->add_option("--out", pf.out, "Output PGM path")->required();
  project->add_option("--hfov", pf.hfov, "Horizontal field of view, degrees");
  project->add_option("--vfov", pf.vfov, "Vertical field of view, degrees");
  project->add_option("--height", pf.height, "Depth map rows");
  project->add_option("--width", pf.width, "Depth map columns");
  project->add_option("--max-range", pf.max_range, "Maximum range, meters");

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best checkpoint");
  train_cmd->add_option("--manifest", tf.manifest, "Dataset manifest CSV")->required();
  train_cmd->add_option("--model", tf.model, "Model kind: io, pcm or pn");
  train_cmd->add_option("--epochs", tf.epochs, "Number of epochs");
  train_cmd->add_option("--batch-size", tf.batch_size, "Minibatch size");
  train_cmd->add_option("--lr", tf.lr, "Adam learning rate");
  train_cmd->add_option("--fraction", tf.fraction, "Use a seeded subset of the manifest");
  train_cmd->add_option("--out", tf.out, "Directory for best.ckpt and history.csv");

  EvalFlags ef;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ef.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--manifest", ef.manifest, "Dataset manifest CSV")->required();
  eval_cmd->add_option("--split", ef.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--curves", ef.curves, "Accuracy curve CSV output");
  eval_cmd->add_option("--threshold", ef.threshold, "Reporting threshold (degrees / km/h)");
  eval_cmd->add_option("--fraction", ef.fraction, "Use a seeded subset of the manifest");

  PredictFlags prf;
  auto* predict = app.add_subcommand("predict", "Predict steering angle and speed for one frame");
  predict->add_option("--checkpoint", prf.checkpoint, "Checkpoint file")->required();
  predict->add_option("--image", prf.image, "Camera frame (binary PPM)")->required();
  predict->add_option("--cloud", prf.cloud, "LiDAR cloud (required for pcm and pn)");

  std::vector<std::string> argv_storage{"driveflow"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (generate->parsed()) return cmd_generate(g, generate_out, out);
    if (project->parsed()) return cmd_project(g, pf, out);
    if (train_cmd->parsed()) return cmd_train(g, tf, out);
    if (eval_cmd->parsed()) return cmd_eval(g, ef, out);
    if (predict->parsed()) return cmd_predict(g, prf, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const TrainingError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace driveflow::cli
