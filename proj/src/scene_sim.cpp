#include "partlift/scene_sim.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "partlift/metrics.hpp"
#include "partlift/proposals.hpp"

namespace partlift {

CameraIntrinsics default_camera() { return {721.5377, 721.5377, 609.5593, 172.854, 1242, 375}; }

void SceneSpec::validate() const {
  camera.validate();
  if (n_vehicles < 0) throw ValidationError("scene: n_vehicles must be >= 0");
  if (!(min_depth > 0) || !(max_depth >= min_depth)) throw ValidationError("scene: invalid depth range");
  if (!(max_lateral_ratio >= 0)) throw ValidationError("scene: invalid lateral range");
  if (!(template_jitter >= 0 && template_jitter < 1)) throw ValidationError("scene: template_jitter in [0, 1)");
  if (max_attempts < 1) throw ValidationError("scene: max_attempts must be >= 1");
}

void NoiseSpec::validate() const {
  if (part_sigma < 0 || box_sigma < 0 || template_sigma < 0) throw ValidationError("noise: sigmas must be >= 0");
  if (!(vis_flip_prob >= 0 && vis_flip_prob <= 1)) throw ValidationError("noise: vis_flip_prob must be in [0, 1]");
}

bool boxes_interpenetrate(const Box3D& a, const Box3D& b) {
  if (std::abs(a.center.y() - b.center.y()) >= (a.dims.h + b.dims.h) / 2) return false;
  // Footprint axes in the (x, z) ground plane: heading and lateral.
  auto axes = [](const Box3D& box) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    return std::array<Vec2, 2>{Vec2(c, -s), Vec2(s, c)};
  };
  auto half = [](const Box3D& box) { return Vec2(box.dims.l / 2, box.dims.w / 2); };
  const Vec2 d(b.center.x() - a.center.x(), b.center.z() - a.center.z());
  const auto aa = axes(a), ab = axes(b);
  const Vec2 ha = half(a), hb = half(b);
  for (const auto& axis : {aa[0], aa[1], ab[0], ab[1]}) {
    const double ra = ha[0] * std::abs(aa[0].dot(axis)) + ha[1] * std::abs(aa[1].dot(axis));
    const double rb = hb[0] * std::abs(ab[0].dot(axis)) + hb[1] * std::abs(ab[1].dot(axis));
    if (std::abs(d.dot(axis)) >= ra + rb) return false;
  }
  return true;
}

namespace {

std::optional<Box2D> projected_mesh_box(const CameraIntrinsics& k, const BankModel& model, const Box3D& box) {
  const Points3 cam = transform_points(box.pose(), scale_shape_to_template(model.mesh.vertices, model.dims, box.dims));
  if (cam.row(2).minCoeff() <= 0.1) return std::nullopt;
  const Points2 uv = project_camera_points(k, cam);
  const Vec2 lo = uv.rowwise().minCoeff(), hi = uv.rowwise().maxCoeff();
  return clip_box(Box2D::from_corners(lo.x(), lo.y(), hi.x(), hi.y()), k.img_w, k.img_h);
}

}  // namespace

Scene generate_scene(const SceneSpec& spec, const ShapeBank& bank) {
  spec.validate();
  if (bank.models.empty()) throw ValidationError("scene: empty bank");
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick_model(0, bank.size() - 1);
  std::uniform_real_distribution<double> depth(spec.min_depth, spec.max_depth);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);

  Scene scene;
  scene.camera = spec.camera;
  std::vector<Box2D> placed_boxes;
  for (int v = 0; v < spec.n_vehicles; ++v) {
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
      const std::size_t m = pick_model(rng);
      const BankModel& model = bank[m];
      Box3D box;
      box.dims = model.dims;
      if (spec.template_jitter > 0) {
        box.dims.w *= 1 + spec.template_jitter * unit(rng);
        box.dims.h *= 1 + spec.template_jitter * unit(rng);
        box.dims.l *= 1 + spec.template_jitter * unit(rng);
      }
      const double z = depth(rng);
      const double x = spec.max_lateral_ratio * unit(rng) * z;
      box.center = {x, spec.camera_height - box.dims.h / 2, z};
      box.yaw = normalize_angle(yaw(rng));

      if (spec.require_center_in_view && !spec.camera.in_image(project_camera_point(spec.camera, box.center)))
        continue;
      bool clash = false;
      for (const auto& other : scene.vehicles) clash = clash || boxes_interpenetrate(box, other.weak.box3d);
      if (clash) continue;
      const auto box2d = projected_mesh_box(spec.camera, model, box);
      if (!box2d) continue;
      for (const auto& other : placed_boxes) clash = clash || iou(*box2d, other) > spec.max_box_iou;
      if (clash) continue;

      WeakAnnotation weak;
      weak.box3d = box;
      scene.vehicles.push_back({weak, model.id});
      placed_boxes.push_back(*box2d);
      break;
    }
  }
  place_meshes(scene, bank);
  return scene;
}

std::vector<DetectionRecord> gt_to_records(const std::vector<VehicleGT>& gts, const ShapeBank& bank, int image) {
  std::vector<DetectionRecord> out;
  out.reserve(gts.size());
  for (const auto& gt : gts) {
    DetectionRecord r;
    r.box = {gt.box, 1.0};
    r.parts2d = gt.parts2d;
    r.vis_scores = VisibilityScores::Zero(static_cast<Eigen::Index>(gt.visibility.size()), kVisibilityClasses);
    for (std::size_t k = 0; k < gt.visibility.size(); ++k)
      r.vis_scores(static_cast<Eigen::Index>(k), static_cast<int>(gt.visibility[k])) = 1.0;
    r.template_sim = encode_template_similarity(gt.dims, bank);
    r.image = image;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DetectionRecord> perturb_records(const std::vector<DetectionRecord>& records, const NoiseSpec& noise,
                                             std::uint64_t seed) {
  noise.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, kVisibilityClasses - 1);
  auto jitter = [&](Eigen::MatrixXd& m, double sigma) {
    if (sigma == 0) return;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) += sigma * normal(rng);
  };

  std::vector<DetectionRecord> out = records;
  for (auto& r : out) {
    if (noise.box_sigma > 0) {
      r.box.box.cx += noise.box_sigma * normal(rng);
      r.box.box.cy += noise.box_sigma * normal(rng);
      r.box.box.w = std::max(1.0, r.box.box.w + noise.box_sigma * normal(rng));
      r.box.box.h = std::max(1.0, r.box.box.h + noise.box_sigma * normal(rng));
    }
    Eigen::MatrixXd parts = r.parts2d;
    jitter(parts, noise.part_sigma);
    r.parts2d = parts;
    Eigen::MatrixXd sim = r.template_sim;
    jitter(sim, noise.template_sigma);
    r.template_sim = sim;
    if (noise.vis_flip_prob > 0) {
      VisibilityVector labels = visibility_argmax(r.vis_scores);
      for (auto& l : labels)
        if (coin(rng) < noise.vis_flip_prob) l = static_cast<Visibility>(pick_class(rng));
      r.vis_scores.setZero();
      for (std::size_t k = 0; k < labels.size(); ++k)
        r.vis_scores(static_cast<Eigen::Index>(k), static_cast<int>(labels[k])) = 1.0;
    }
  }
  return out;
}

void PoseTrialSpec::validate() const {
  camera.validate();
  pnp.validate();
  if (trials < 0) throw ValidationError("pose trials: trials must be >= 0");
  if (!(min_depth > 0) || !(max_depth >= min_depth)) throw ValidationError("pose trials: invalid depth range");
  if (!(part_sigma >= 0)) throw ValidationError("pose trials: part_sigma must be >= 0");
}

std::vector<PoseTrial> run_pose_trials(const ShapeBank& bank, const PoseTrialSpec& spec) {
  spec.validate();
  if (bank.models.empty()) throw ValidationError("pose trials: empty bank");
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick_model(0, bank.size() - 1);
  std::uniform_real_distribution<double> depth(spec.min_depth, spec.max_depth);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<PoseTrial> out;
  out.reserve(static_cast<std::size_t>(spec.trials));
  for (int i = 0; i < spec.trials; ++i) {
    const BankModel& model = bank[pick_model(rng)];
    PoseTrial trial;
    trial.model_id = model.id;
    const double z = depth(rng);
    trial.truth.t = {spec.max_lateral_ratio * unit(rng) * z, spec.camera_height - model.dims.h / 2, z};
    trial.truth.yaw = normalize_angle(yaw(rng));
    Points2 uv = project_shape(spec.camera, trial.truth, model.shape);
    if (spec.part_sigma > 0)
      for (Eigen::Index k = 0; k < uv.cols(); ++k) uv.col(k) += spec.part_sigma * Vec2(normal(rng), normal(rng));

    const auto start = std::chrono::steady_clock::now();
    try {
      const PoseSolution sol = solve_pose(model.shape, uv, spec.camera, spec.pnp);
      trial.ok = true;
      trial.yaw_error = std::abs(normalize_angle(sol.pose.yaw - trial.truth.yaw));
      trial.translation_error = (sol.pose.t - trial.truth.t).norm();
      trial.reproj_rmse = sol.reproj_rmse;
    } catch (const Error&) {
      trial.ok = false;
    }
    trial.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.push_back(trial);
  }
  return out;
}

namespace {

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

PoseTrialSummary summarize_pose_trials(const std::vector<PoseTrial>& trials, double yaw_tol_deg,
                                       double translation_tol) {
  PoseTrialSummary s;
  s.trials = static_cast<int>(trials.size());
  std::vector<double> latency, yaw_err, t_err;
  int good = 0;
  for (const auto& t : trials) {
    latency.push_back(t.latency_ms);
    if (!t.ok) {
      ++s.failures;
      continue;
    }
    const double yaw_deg = t.yaw_error * 180.0 / std::numbers::pi;
    yaw_err.push_back(yaw_deg);
    t_err.push_back(t.translation_error);
    good += yaw_deg < yaw_tol_deg && t.translation_error < translation_tol;
  }
  s.median_latency_ms = quantile(latency, 0.5);
  s.p95_latency_ms = quantile(latency, 0.95);
  s.median_yaw_error_deg = quantile(yaw_err, 0.5);
  s.median_translation_error = quantile(t_err, 0.5);
  s.within_tolerance = trials.empty() ? 0.0 : static_cast<double>(good) / static_cast<double>(trials.size());
  return s;
}

}  // namespace partlift
