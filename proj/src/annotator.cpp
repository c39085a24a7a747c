#include "partlift/annotator.hpp"

#include <cmath>
#include <limits>

#include "partlift/proposals.hpp"

namespace partlift {

std::size_t select_model(const WeakAnnotation& weak, const ShapeBank& bank) {
  if (bank.models.empty()) throw ValidationError("select_model: empty bank");
  const Vec3 dims = weak.box3d.dims.whl();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < bank.size(); ++m) {
    const double d = (dims - bank[m].dims.whl()).norm();
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

namespace {

std::size_t model_for(const SceneVehicle& v, const ShapeBank& bank) {
  return v.model_id.empty() ? select_model(v.weak, bank) : bank.index_of(v.model_id);
}

}  // namespace

void place_meshes(Scene& scene, const ShapeBank& bank) {
  scene.meshes.clear();
  for (std::size_t i = 0; i < scene.vehicles.size(); ++i) {
    const auto& v = scene.vehicles[i];
    const BankModel& model = bank[model_for(v, bank)];
    const VisibilityMesh scaled = scale_mesh_to_template(model.mesh, model.dims, v.weak.box3d.dims);
    scene.meshes.push_back({i, transform_points(v.weak.box3d.pose(), scaled.vertices), scaled.faces});
  }
}

Scene build_scene(const CameraIntrinsics& camera, const std::vector<WeakAnnotation>& weak, const ShapeBank& bank) {
  camera.validate();
  Scene scene;
  scene.camera = camera;
  for (const auto& w : weak) scene.vehicles.push_back({w, bank[select_model(w, bank)].id});
  place_meshes(scene, bank);
  return scene;
}

std::optional<double> intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                             const Vec3& c) {
  constexpr double kParallel = 1e-14;
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < kParallel) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= 0.0) return std::nullopt;
  return t;
}

std::optional<RayHit> cast_ray(const Scene& scene, const Vec3& dir, double max_distance) {
  std::optional<RayHit> best;
  const Vec3 origin = Vec3::Zero();
  for (const auto& mesh : scene.meshes) {
    for (const auto& f : mesh.faces) {
      const auto t = intersect_ray_triangle(origin, dir, mesh.vertices.col(f.v[0]), mesh.vertices.col(f.v[1]),
                                            mesh.vertices.col(f.v[2]));
      if (t && *t < max_distance && (!best || *t < best->distance)) best = RayHit{*t, mesh.vehicle, f.part_label};
    }
  }
  return best;
}

VisibilityVector compute_part_visibility(const Scene& scene, std::size_t vehicle, const Points3& parts_camera,
                                         const CameraIntrinsics& k) {
  const Points2 uv = project_camera_points(k, parts_camera);
  VisibilityVector out(static_cast<std::size_t>(parts_camera.cols()), Visibility::visible);
  for (Eigen::Index i = 0; i < parts_camera.cols(); ++i) {
    auto& label = out[static_cast<std::size_t>(i)];
    if (!k.in_image(uv.col(i))) {
      label = Visibility::truncated;
      continue;
    }
    const double dist = parts_camera.col(i).norm();
    const auto hit = cast_ray(scene, parts_camera.col(i) / dist, dist - kBlockerEpsilon);
    if (!hit) {
      label = Visibility::visible;
    } else if (hit->vehicle == vehicle) {
      label = hit->part_label == i + 1 ? Visibility::visible : Visibility::self_occluded;
    } else {
      label = Visibility::occluded;
    }
  }
  return out;
}

std::vector<VehicleGT> generate_ground_truth(const Scene& scene, const ShapeBank& bank,
                                             const GroundTruthOptions& opts, std::vector<std::string>* warnings) {
  std::vector<VehicleGT> out;
  const auto& k = scene.camera;
  for (std::size_t i = 0; i < scene.vehicles.size(); ++i) {
    const auto& v = scene.vehicles[i];
    const BankModel& model = bank[model_for(v, bank)];
    const Box3D& b3 = v.weak.box3d;
    const Pose pose = b3.pose();

    const Points3 mesh_cam =
        transform_points(pose, scale_shape_to_template(model.mesh.vertices, model.dims, b3.dims));
    if (mesh_cam.row(2).maxCoeff() <= kMinDepth) {
      if (warnings) warnings->push_back("vehicle " + std::to_string(i) + " is behind the camera; skipped");
      continue;
    }

    VehicleGT gt;
    gt.model_id = model.id;
    gt.dims = b3.dims;
    gt.box3d = b3;
    gt.parts3d = transform_points(pose, scale_shape_to_template(model.shape, model.dims, b3.dims));
    gt.parts2d = project_camera_points(k, gt.parts3d);
    gt.visibility = compute_part_visibility(scene, i, gt.parts3d, k);
    gt.truncation = v.weak.truncation;
    gt.occlusion = v.weak.occlusion;
    if (opts.box_from_dataset && v.weak.box2d) {
      gt.box = *v.weak.box2d;
    } else {
      const Points2 mesh_uv = project_camera_points(k, mesh_cam);
      const Vec2 lo = mesh_uv.rowwise().minCoeff(), hi = mesh_uv.rowwise().maxCoeff();
      gt.box = clip_box(Box2D::from_corners(lo.x(), lo.y(), hi.x(), hi.y()), k.img_w, k.img_h);
    }
    out.push_back(std::move(gt));
  }
  return out;
}

}  // namespace partlift
