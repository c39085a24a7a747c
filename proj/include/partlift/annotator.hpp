#pragma once

// Semi-automatic ground truth: pick the closest bank model for a weakly
// annotated 3D box, project its parts, and classify part visibility by
// casting rays against the part-labeled visibility meshes of the scene.

#include <optional>
#include <string>
#include <vector>

#include "partlift/codec.hpp"
#include "partlift/geom.hpp"
#include "partlift/shape_bank.hpp"

namespace partlift {

/// Blocker tolerance along the viewing ray, meters.
inline constexpr double kBlockerEpsilon = 0.01;

struct WeakAnnotation {
  Box3D box3d;
  /// Dataset-provided 2D box and KITTI-style metadata, when available.
  std::optional<Box2D> box2d;
  std::optional<double> truncation;
  std::optional<int> occlusion;
};

struct SceneVehicle {
  WeakAnnotation weak;
  std::string model_id;
};

/// A vehicle's scaled visibility mesh in camera coordinates.
struct PlacedMesh {
  std::size_t vehicle = 0;
  Points3 vertices;
  std::vector<MeshFace> faces;
};

struct Scene {
  CameraIntrinsics camera;
  std::vector<SceneVehicle> vehicles;
  std::vector<PlacedMesh> meshes;
};

struct VehicleGT {
  Box2D box;
  Box3D box3d;
  Points2 parts2d;
  Points3 parts3d;
  VisibilityVector visibility;
  Template3D dims;
  std::string model_id;
  std::optional<double> truncation;
  std::optional<int> occlusion;
};

/// argmin_m |(w,h,l) - template_m|, ties to the lowest index.
std::size_t select_model(const WeakAnnotation& weak, const ShapeBank& bank);

/// Assigns models with select_model and places their meshes.
Scene build_scene(const CameraIntrinsics& camera, const std::vector<WeakAnnotation>& weak, const ShapeBank& bank);
/// Recomputes Scene::meshes from the vehicles' model ids.
void place_meshes(Scene& scene, const ShapeBank& bank);

/// Moller-Trumbore without back-face culling. Returns the ray parameter t > 0.
std::optional<double> intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                             const Vec3& c);

struct RayHit {
  double distance = 0;
  std::size_t vehicle = 0;
  int part_label = 0;
};

/// Nearest hit from the camera origin along unit `dir` with distance < max_distance.
std::optional<RayHit> cast_ray(const Scene& scene, const Vec3& dir, double max_distance);

/// Classifies camera-frame parts of one vehicle: truncated (outside image),
/// else visible / self_occluded / occluded by the nearest blocker.
VisibilityVector compute_part_visibility(const Scene& scene, std::size_t vehicle, const Points3& parts_camera,
                                         const CameraIntrinsics& k);

struct GroundTruthOptions {
  /// Use the weak annotation's dataset 2D box instead of the projected mesh bounds.
  bool box_from_dataset = false;
};

/// One VehicleGT per vehicle in front of the camera; skipped vehicles are
/// reported in `warnings` when given.
std::vector<VehicleGT> generate_ground_truth(const Scene& scene, const ShapeBank& bank,
                                             const GroundTruthOptions& opts = {},
                                             std::vector<std::string>* warnings = nullptr);

}  // namespace partlift
