#include "cli.hpp"

#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "partlift/annotator.hpp"
#include "partlift/errors.hpp"
#include "partlift/inference.hpp"
#include "partlift/io.hpp"
#include "partlift/kitti.hpp"
#include "partlift/shape_bank.hpp"

namespace partlift::cli {

using nlohmann::json;

namespace {

/// Reads known keys from a config section and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ParseError("config: '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const std::string& key, T& dst) {
    used_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParseError("config: " + name_ + "." + key + ": " + e.what());
    }
  }

  /// null clears the value.
  template <class T>
  void get(const std::string& key, std::optional<T>& dst) {
    if (j_.contains(key) && j_.at(key).is_null()) {
      used_.push_back(key);
      dst.reset();
      return;
    }
    if (!j_.contains(key)) return;
    get(key, dst.emplace());
  }

  const json* sub(const std::string& key) {
    used_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (std::find(used_.begin(), used_.end(), item.key()) == used_.end())
        throw ParseError("config: unknown key '" + name_ + "." + item.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::vector<std::string> used_;
};

PnPMode pnp_mode_from_string(const std::string& s) {
  if (s == "yaw") return PnPMode::yaw_constrained;
  if (s == "6dof") return PnPMode::full_6dof;
  throw ParseError("unknown pnp mode '" + s + "' (yaw or 6dof)");
}

std::string to_string(PnPMode m) { return m == PnPMode::yaw_constrained ? "yaw" : "6dof"; }

Interpolation interp_from_int(int n) {
  if (n == 11) return Interpolation::eleven_point;
  if (n == 41) return Interpolation::forty_one_point;
  throw ParseError("interpolation must be 11 or 41");
}

std::string distance_key(double d) {
  std::ostringstream s;
  s << d;
  std::string out = s.str();
  if (out.find_first_of(".e") == std::string::npos) out += ".0";
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

ShapeBank load_checked_bank(const RunConfig& cfg, std::ostream& err) {
  ShapeBank bank = load_bank(cfg.bank);
  for (const auto& w : bank.warnings) err << "warning: " << w << "\n";
  return bank;
}

CameraIntrinsics resolve_camera(const RunConfig& cfg) {
  if (cfg.camera) return load_camera(*cfg.camera);
  if (cfg.calib) return parse_kitti_calib(read_text_file(*cfg.calib));
  return default_camera();
}

std::filesystem::path out_dir(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ValidationError("--out is required");
  return cfg.out;
}

// ---- subcommands ---------------------------------------------------------

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const ShapeBank bank = load_checked_bank(cfg, err);
  const auto dir = out_dir(cfg);
  const CameraIntrinsics camera = resolve_camera(cfg);

  std::vector<SceneRecord> scenes;
  std::vector<GroundTruthRecord> gts;
  std::vector<DetectionRecord> records;
  for (int i = 0; i < cfg.images; ++i) {
    SceneSpec spec = cfg.scene;
    spec.camera = camera;
    spec.seed = image_seed(cfg.seed, i);
    Scene scene = generate_scene(spec, bank);
    if (static_cast<int>(scene.vehicles.size()) < spec.n_vehicles)
      err << "warning: image " << i << ": placed " << scene.vehicles.size() << " of " << spec.n_vehicles
          << " vehicles\n";
    std::vector<std::string> warnings;
    const auto image_gts = generate_ground_truth(scene, bank, {}, &warnings);
    for (const auto& w : warnings) err << "warning: image " << i << ": " << w << "\n";
    for (const auto& g : image_gts) gts.push_back({i, g});
    auto image_records = gt_to_records(image_gts, bank, i);
    records.insert(records.end(), image_records.begin(), image_records.end());
    scenes.push_back({i, std::move(scene)});
  }
  records = perturb_records(records, cfg.noise, image_seed(cfg.seed, -1));

  write_text_file(dir / "scenes.jsonl", write_scenes(scenes, FileHeader{"scenes", cfg.seed}));
  write_text_file(dir / "gt.jsonl", write_ground_truth(gts, FileHeader{"ground_truth", cfg.seed}));
  write_text_file(dir / "records.jsonl", write_records(records, FileHeader{"records", cfg.seed}));
  write_text_file(dir / "camera.json", camera_to_json(camera));
  out << "synth: " << scenes.size() << " images, " << gts.size() << " vehicles -> " << dir.string() << "\n";
  return kExitOk;
}

int cmd_annotate(const RunConfig& cfg, const std::optional<std::string>& scenes_path,
                 const std::optional<std::string>& kitti_label, bool box_from_dataset, std::ostream& out,
                 std::ostream& err) {
  const ShapeBank bank = load_checked_bank(cfg, err);
  const auto dir = out_dir(cfg);
  if (scenes_path.has_value() == kitti_label.has_value())
    throw ValidationError("annotate: give exactly one of --scenes or --kitti-label");

  std::vector<SceneRecord> scenes;
  if (scenes_path) {
    scenes = read_scenes(read_text_file(*scenes_path)).items;
  } else {
    if (!cfg.calib) throw MissingCalib("annotate: --kitti-label needs --calib");
    const KittiFrame frame = parse_kitti(read_text_file(*kitti_label), read_text_file(*cfg.calib));
    std::vector<WeakAnnotation> weak;
    for (const KittiObject* o : kitti_objects(frame.labels)) weak.push_back(to_weak_annotation(*o));
    scenes.push_back({0, build_scene(frame.camera, weak, bank)});
  }

  GroundTruthOptions opts;
  opts.box_from_dataset = box_from_dataset;
  std::vector<GroundTruthRecord> gts;
  for (auto& rec : scenes) {
    place_meshes(rec.scene, bank);
    std::vector<std::string> warnings;
    for (auto& g : generate_ground_truth(rec.scene, bank, opts, &warnings)) gts.push_back({rec.image, std::move(g)});
    for (const auto& w : warnings) err << "warning: image " << rec.image << ": " << w << "\n";
  }
  write_text_file(dir / "gt.jsonl", write_ground_truth(gts, FileHeader{"ground_truth", cfg.seed}));
  out << "annotate: " << gts.size() << " vehicles -> " << (dir / "gt.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_infer(const RunConfig& cfg, const std::string& records_path, std::ostream& out, std::ostream& err) {
  const ShapeBank bank = load_checked_bank(cfg, err);
  const auto dir = out_dir(cfg);
  const CameraIntrinsics camera = resolve_camera(cfg);
  const auto records = read_records(read_text_file(records_path));
  const InferenceOutput result = run_inference(records.items, bank, camera, cfg.nms, cfg.pnp);
  for (const auto& f : result.failures) err << "warning: record " << f.record << ": " << f.reason << "\n";
  std::vector<DetectionOutput> dets;
  for (const auto& r : result.results) dets.push_back(to_detection_output(r));
  write_text_file(dir / "detections.jsonl", write_detections(dets, FileHeader{"detections", cfg.seed}));
  out << "infer: " << records.items.size() << " records, " << dets.size() << " detections, "
      << result.failures.size() << " failures -> " << (dir / "detections.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& dets_path, const std::string& gt_path, std::ostream& out) {
  const auto dets = read_detections(read_text_file(dets_path));
  const auto gts = read_ground_truth(read_text_file(gt_path));
  const EvalReport report = evaluate(group_eval_images(dets.items, gts.items), cfg.eval);
  out << metrics_text(report);
  if (!cfg.out.empty())
    write_text_file(std::filesystem::path(cfg.out) / "metrics.json", metrics_json(report, cfg).dump(2) + "\n");
  return kExitOk;
}

int cmd_check_grad(const RunConfig& cfg, int points, std::ostream& out) {
  const auto entries = run_gradient_suite(cfg.seed, points);
  bool ok = true;
  json report = json::array();
  out << std::left << std::setw(20) << "loss" << std::setw(8) << "points" << std::setw(14) << "max_rel_err"
      << "gated_max_abs\n";
  for (const auto& e : entries) {
    const bool pass = e.max_rel_error < 1e-5 && e.gated_max_abs == 0.0;
    ok = ok && pass;
    out << std::setw(20) << e.loss << std::setw(8) << e.points << std::setw(14) << std::scientific
        << std::setprecision(3) << e.max_rel_error << e.gated_max_abs << std::defaultfloat
        << (pass ? "  ok" : "  FAIL") << "\n";
    report.push_back({{"loss", e.loss},
                      {"points", e.points},
                      {"max_rel_error", e.max_rel_error},
                      {"gated_max_abs", e.gated_max_abs},
                      {"pass", pass}});
  }
  if (!cfg.out.empty())
    write_text_file(std::filesystem::path(cfg.out) / "grad_check.json",
                    json({{"seed", cfg.seed}, {"points", points}, {"losses", report}}).dump(2) + "\n");
  return ok ? kExitOk : kExitRuntime;
}

int cmd_bench_pose(const RunConfig& cfg, int trials, double min_depth, double max_depth, std::ostream& out,
                   std::ostream& err) {
  const ShapeBank bank = load_checked_bank(cfg, err);
  PoseTrialSpec spec;
  spec.seed = cfg.seed;
  spec.trials = trials;
  spec.min_depth = min_depth;
  spec.max_depth = max_depth;
  spec.part_sigma = cfg.noise.part_sigma;
  spec.camera = resolve_camera(cfg);
  spec.pnp = cfg.pnp;
  const PoseTrialSummary s = summarize_pose_trials(run_pose_trials(bank, spec));
  const json report = {{"seed", cfg.seed},
                       {"trials", s.trials},
                       {"failures", s.failures},
                       {"pnp_mode", to_string(cfg.pnp.mode)},
                       {"part_sigma", spec.part_sigma},
                       {"median_latency_ms", s.median_latency_ms},
                       {"p95_latency_ms", s.p95_latency_ms},
                       {"median_yaw_error_deg", s.median_yaw_error_deg},
                       {"median_translation_error_m", s.median_translation_error},
                       {"within_0.1deg_1cm", s.within_tolerance}};
  out << report.dump(2) << "\n";
  if (!cfg.out.empty()) write_text_file(std::filesystem::path(cfg.out) / "bench_pose.json", report.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

void RunConfig::validate() const {
  eval.validate();
  pnp.validate();
  anchors.validate();
  noise.validate();
  scene.validate();
  if (!(nms >= 0 && nms <= 1)) throw ValidationError("nms threshold must be in [0, 1]");
  if (images < 0) throw ValidationError("images must be >= 0");
  for (double w : {loss_weights.cls, loss_weights.reg, loss_weights.parts, loss_weights.vis, loss_weights.temp})
    if (!(w >= 0)) throw ValidationError("loss weights must be >= 0");
}

void apply_config(RunConfig& cfg, const json& doc) {
  Section top(doc, "config");
  top.get("bank", cfg.bank);
  top.get("camera", cfg.camera);
  top.get("calib", cfg.calib);
  top.get("seed", cfg.seed);
  top.get("out", cfg.out);
  top.get("nms", cfg.nms);
  top.get("images", cfg.images);
  if (const json* j = top.sub("eval")) {
    Section e(*j, "eval");
    e.get("iou", cfg.eval.iou_threshold);
    e.get("alp_distances", cfg.eval.alp_distances);
    e.get("part_dist_threshold", cfg.eval.part_dist_threshold);
    e.get("part_norm_height", cfg.eval.part_norm_height);
    e.get("template_rel_tol", cfg.eval.template_rel_tol);
    int interp = cfg.eval.interpolation == Interpolation::eleven_point ? 11 : 41;
    e.get("interp", interp);
    cfg.eval.interpolation = interp_from_int(interp);
    std::string difficulty(to_string(cfg.eval.difficulty));
    e.get("difficulty", difficulty);
    cfg.eval.difficulty = difficulty_from_string(difficulty);
    e.finish();
  }
  if (const json* j = top.sub("loss_weights")) {
    Section w(*j, "loss_weights");
    w.get("cls", cfg.loss_weights.cls);
    w.get("reg", cfg.loss_weights.reg);
    w.get("parts", cfg.loss_weights.parts);
    w.get("vis", cfg.loss_weights.vis);
    w.get("temp", cfg.loss_weights.temp);
    w.finish();
  }
  if (const json* j = top.sub("pnp")) {
    Section p(*j, "pnp");
    std::string mode = to_string(cfg.pnp.mode);
    p.get("mode", mode);
    cfg.pnp.mode = pnp_mode_from_string(mode);
    p.get("max_iters", cfg.pnp.max_iters);
    p.get("tol", cfg.pnp.tol);
    p.get("min_points", cfg.pnp.min_points);
    p.finish();
  }
  if (const json* j = top.sub("anchors")) {
    Section a(*j, "anchors");
    a.get("aspect_ratios", cfg.anchors.aspect_ratios);
    a.get("scales", cfg.anchors.scales);
    a.get("stride", cfg.anchors.stride);
    a.finish();
  }
  if (const json* j = top.sub("noise")) {
    Section n(*j, "noise");
    n.get("parts_sigma", cfg.noise.part_sigma);
    n.get("box_sigma", cfg.noise.box_sigma);
    n.get("template_sigma", cfg.noise.template_sigma);
    n.get("vis_flip_prob", cfg.noise.vis_flip_prob);
    n.finish();
  }
  if (const json* j = top.sub("scene")) {
    Section sc(*j, "scene");
    sc.get("n_vehicles", cfg.scene.n_vehicles);
    sc.get("min_depth", cfg.scene.min_depth);
    sc.get("max_depth", cfg.scene.max_depth);
    sc.get("max_lateral_ratio", cfg.scene.max_lateral_ratio);
    sc.get("camera_height", cfg.scene.camera_height);
    sc.get("max_box_iou", cfg.scene.max_box_iou);
    sc.get("template_jitter", cfg.scene.template_jitter);
    sc.get("max_attempts", cfg.scene.max_attempts);
    sc.finish();
  }
  top.finish();
}

json config_json(const RunConfig& cfg) {
  json j;
  j["bank"] = cfg.bank;
  j["camera"] = cfg.camera ? json(*cfg.camera) : json(nullptr);
  j["calib"] = cfg.calib ? json(*cfg.calib) : json(nullptr);
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  j["nms"] = cfg.nms;
  j["images"] = cfg.images;
  j["eval"] = {{"iou", cfg.eval.iou_threshold},
               {"alp_distances", cfg.eval.alp_distances},
               {"part_dist_threshold", cfg.eval.part_dist_threshold},
               {"part_norm_height", cfg.eval.part_norm_height},
               {"template_rel_tol", cfg.eval.template_rel_tol},
               {"interp", cfg.eval.interpolation == Interpolation::eleven_point ? 11 : 41},
               {"difficulty", std::string(to_string(cfg.eval.difficulty))}};
  j["loss_weights"] = {{"cls", cfg.loss_weights.cls},
                       {"reg", cfg.loss_weights.reg},
                       {"parts", cfg.loss_weights.parts},
                       {"vis", cfg.loss_weights.vis},
                       {"temp", cfg.loss_weights.temp}};
  j["pnp"] = {{"mode", to_string(cfg.pnp.mode)},
              {"max_iters", cfg.pnp.max_iters},
              {"tol", cfg.pnp.tol},
              {"min_points", cfg.pnp.min_points}};
  j["anchors"] = {{"aspect_ratios", cfg.anchors.aspect_ratios},
                  {"scales", cfg.anchors.scales},
                  {"stride", cfg.anchors.stride}};
  j["noise"] = {{"parts_sigma", cfg.noise.part_sigma},
                {"box_sigma", cfg.noise.box_sigma},
                {"template_sigma", cfg.noise.template_sigma},
                {"vis_flip_prob", cfg.noise.vis_flip_prob}};
  j["scene"] = {{"n_vehicles", cfg.scene.n_vehicles},
                {"min_depth", cfg.scene.min_depth},
                {"max_depth", cfg.scene.max_depth},
                {"max_lateral_ratio", cfg.scene.max_lateral_ratio},
                {"camera_height", cfg.scene.camera_height},
                {"max_box_iou", cfg.scene.max_box_iou},
                {"template_jitter", cfg.scene.template_jitter},
                {"max_attempts", cfg.scene.max_attempts}};
  return j;
}

json metrics_json(const EvalReport& report, const RunConfig& cfg) {
  json alp = json::object();
  for (const auto& [d, v] : report.alp) alp[distance_key(d)] = v;
  return {{"config", config_json(cfg)},
          {"ap", report.ap},
          {"aos", report.aos},
          {"alp", alp},
          {"part_loc", optional_json(report.part_loc)},
          {"vis_acc", optional_json(report.vis_acc)},
          {"template_acc", optional_json(report.template_acc)},
          {"n_images", report.n_images},
          {"n_gt", report.n_gt},
          {"n_det", report.n_det}};
}

std::string metrics_text(const EvalReport& report) {
  std::ostringstream s;
  auto line = [&](const std::string& name, const std::optional<double>& v) {
    s << std::left << std::setw(14) << name;
    if (v) {
      s << std::fixed << std::setprecision(4) << *v << "\n";
    } else {
      s << "n/a\n";
    }
  };
  s << "images " << report.n_images << "  gt " << report.n_gt << "  detections " << report.n_det << "\n";
  line("AP", report.ap);
  line("AOS", report.aos);
  for (const auto& [d, v] : report.alp) line("ALP@" + distance_key(d) + "m", v);
  line("part_loc", report.part_loc);
  line("vis_acc", report.vis_acc);
  line("template_acc", report.template_acc);
  return s.str();
}

std::uint64_t image_seed(std::uint64_t seed, int image) {
  // splitmix64 finalizer over (seed, image).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(image) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"partlift: vehicle part and pose toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, bank, camera, calib, out_path, difficulty, pnp_mode;
  std::optional<std::uint64_t> seed;
  std::optional<double> parts_sigma, iou_thr, nms_thr;
  std::optional<int> interp;
  app.add_option("--config", config_path, "JSON config file; flags override it");
  app.add_option("--bank", bank, "shape bank JSON");
  app.add_option("--camera", camera, "camera intrinsics JSON");
  app.add_option("--calib", calib, "KITTI calib file (P2 row)");
  app.add_option("--seed", seed, "top-level seed");
  app.add_option("--out", out_path, "output directory");
  app.add_option("--noise-parts-sigma", parts_sigma, "part noise sigma, pixels");
  app.add_option("--iou", iou_thr, "evaluation IoU threshold");
  app.add_option("--nms", nms_thr, "NMS IoU threshold");
  app.add_option("--interp", interp, "recall sample count")->check(CLI::IsMember({11, 41}));
  app.add_option("--difficulty", difficulty, "KITTI difficulty")
      ->check(CLI::IsMember({"easy", "moderate", "hard", "all"}));
  app.add_option("--pnp-mode", pnp_mode, "pose solver mode")->check(CLI::IsMember({"yaw", "6dof"}));

  auto* synth = app.add_subcommand("synth", "generate scenes, ground truth and ideal records");
  std::optional<int> images, vehicles;
  synth->add_option("--images", images, "number of images");
  synth->add_option("--vehicles", vehicles, "vehicles per image");

  auto* annotate = app.add_subcommand("annotate", "ground truth from weak 3D boxes");
  std::optional<std::string> scenes_path, kitti_label;
  bool box_from_dataset = false;
  annotate->add_option("--scenes", scenes_path, "scenes JSON lines");
  annotate->add_option("--kitti-label", kitti_label, "KITTI label file (needs --calib)");
  annotate->add_flag("--box-from-dataset", box_from_dataset, "keep dataset 2D boxes");

  auto* infer = app.add_subcommand("infer", "recover 3D vehicles from detection records");
  std::string records_path;
  infer->add_option("--records", records_path, "records JSON lines")->required();

  auto* eval = app.add_subcommand("eval", "evaluate detections against ground truth");
  std::string dets_path, gt_path;
  eval->add_option("--dets", dets_path, "detections JSON lines")->required();
  eval->add_option("--gt", gt_path, "ground truth JSON lines")->required();

  auto* check_grad = app.add_subcommand("check-grad", "finite-difference gradient suite");
  int points = 100;
  check_grad->add_option("--points", points, "random points per loss");

  auto* bench = app.add_subcommand("bench-pose", "pose solver latency and accuracy");
  int trials = 500;
  double min_depth = 5.0, max_depth = 50.0;
  bench->add_option("--trials", trials, "number of vehicles");
  bench->add_option("--min-depth", min_depth, "meters");
  bench->add_option("--max-depth", max_depth, "meters");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    RunConfig cfg;
    if (config_path) {
      json doc;
      try {
        doc = json::parse(read_text_file(*config_path));
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
      }
      apply_config(cfg, doc);
    }
    if (bank) cfg.bank = *bank;
    if (camera) cfg.camera = *camera;
    if (calib) cfg.calib = *calib;
    if (seed) cfg.seed = *seed;
    if (out_path) cfg.out = *out_path;
    if (parts_sigma) cfg.noise.part_sigma = *parts_sigma;
    if (iou_thr) cfg.eval.iou_threshold = *iou_thr;
    if (nms_thr) cfg.nms = *nms_thr;
    if (interp) cfg.eval.interpolation = interp_from_int(*interp);
    if (difficulty) cfg.eval.difficulty = difficulty_from_string(*difficulty);
    if (pnp_mode) cfg.pnp.mode = pnp_mode_from_string(*pnp_mode);
    if (images) cfg.images = *images;
    if (vehicles) cfg.scene.n_vehicles = *vehicles;
    cfg.validate();

    if (synth->parsed()) return cmd_synth(cfg, out, err);
    if (annotate->parsed()) return cmd_annotate(cfg, scenes_path, kitti_label, box_from_dataset, out, err);
    if (infer->parsed()) return cmd_infer(cfg, records_path, out, err);
    if (eval->parsed()) return cmd_eval(cfg, dets_path, gt_path, out);
    if (check_grad->parsed()) {
      if (points < 1) throw ValidationError("--points must be >= 1");
      return cmd_check_grad(cfg, points, out);
    }
    if (bench->parsed()) return cmd_bench_pose(cfg, trials, min_depth, max_depth, out, err);
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const MissingCalib& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace partlift::cli
