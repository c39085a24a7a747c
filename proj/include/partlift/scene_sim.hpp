#pragma once

// Synthetic scenes, ideal network-style records and their perturbation.

#include <cstdint>
#include <string>
#include <vector>

#include "partlift/annotator.hpp"
#include "partlift/inference.hpp"

namespace partlift {

/// KITTI-like left color camera (1242 x 375).
CameraIntrinsics default_camera();

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_vehicles = 5;
  double min_depth = 5.0;
  double max_depth = 50.0;
  /// Lateral offset range as a fraction of depth (x / z).
  double max_lateral_ratio = 0.75;
  /// Camera height above the ground plane (vehicles rest on it).
  double camera_height = 1.65;
  /// Reject placements whose projected 2D boxes overlap more than this.
  double max_box_iou = 0.5;
  /// Reject placements whose 3D center projects outside the image.
  bool require_center_in_view = true;
  /// Relative jitter on the assigned model's template; 0 keeps it exact.
  double template_jitter = 0.0;
  CameraIntrinsics camera = default_camera();
  int max_attempts = 1000;

  void validate() const;
};

struct NoiseSpec {
  double part_sigma = 0;
  double box_sigma = 0;
  double template_sigma = 0;
  double vis_flip_prob = 0;

  void validate() const;
};

/// Deterministic in spec.seed. Vehicles never interpenetrate; each is
/// assigned a uniformly drawn bank model.
Scene generate_scene(const SceneSpec& spec, const ShapeBank& bank);

/// Bird's-eye test for overlapping 3D boxes (yaw about the vertical axis).
bool boxes_interpenetrate(const Box3D& a, const Box3D& b);

/// Ideal outputs: score 1, GT box and parts, one-hot GT visibility, encoded GT template.
std::vector<DetectionRecord> gt_to_records(const std::vector<VehicleGT>& gts, const ShapeBank& bank, int image = 0);

/// Gaussian noise on parts, boxes and log similarity; visibility resampled
/// uniformly over the four classes with probability vis_flip_prob.
std::vector<DetectionRecord> perturb_records(const std::vector<DetectionRecord>& records, const NoiseSpec& noise,
                                             std::uint64_t seed);

/// Single-vehicle pose trials: ground-truth parts projected (optionally with
/// pixel noise) and solved back with solve_pose.
struct PoseTrialSpec {
  std::uint64_t seed = 0;
  int trials = 500;
  double min_depth = 5.0;
  double max_depth = 50.0;
  double max_lateral_ratio = 0.6;
  double camera_height = 1.65;
  double part_sigma = 0.0;
  CameraIntrinsics camera = default_camera();
  PnPOptions pnp;

  void validate() const;
};

struct PoseTrial {
  Pose truth;
  std::string model_id;
  bool ok = false;  ///< false when the solver threw
  double yaw_error = 0;  ///< |wrapped yaw difference|, radians
  double translation_error = 0;  ///< meters
  double reproj_rmse = 0;
  double latency_ms = 0;
};

std::vector<PoseTrial> run_pose_trials(const ShapeBank& bank, const PoseTrialSpec& spec);

struct PoseTrialSummary {
  int trials = 0;
  int failures = 0;
  double median_latency_ms = 0;
  double p95_latency_ms = 0;
  double median_yaw_error_deg = 0;
  double median_translation_error = 0;
  /// Share of trials with yaw error < yaw_tol_deg and translation error < translation_tol.
  double within_tolerance = 0;
};

PoseTrialSummary summarize_pose_trials(const std::vector<PoseTrial>& trials, double yaw_tol_deg = 0.1,
                                       double translation_tol = 0.01);

}  // namespace partlift
