#pragma once

// Pose from 2D/3D part correspondences: EPnP initialization, yaw-manifold
// Gauss-Newton refinement, and a brute-force yaw-grid oracle.

#include <optional>
#include <vector>

#include "partlift/geom.hpp"

namespace partlift {

enum class PnPMode { full_6dof, yaw_constrained };

struct PnPOptions {
  PnPMode mode = PnPMode::yaw_constrained;
  int max_iters = 50;
  double tol = 1e-10;
  /// 0 selects the per-mode default (6 full, 4 yaw-constrained).
  int min_points = 0;
  /// Per-part residual weights; empty means all parts weigh 1.
  std::vector<double> part_weights;

  int required_points() const { return min_points > 0 ? min_points : (mode == PnPMode::full_6dof ? 6 : 4); }
  void validate() const;
};

struct PoseSolution {
  Pose pose;
  double reproj_rmse = 0;
  bool converged = false;
  int iterations = 0;
  /// Full rotation of the EPnP estimate; for yaw poses this is rotation_yaw(pose.yaw).
  Mat3 rotation = Mat3::Identity();
};

/// sqrt(mean_k |project(pose, p_k) - q_k|^2).
double reprojection_error(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                          const Pose& pose);

/// Closed-form EPnP (four control points, 12x12 null-space analysis, betas for
/// null-space dimensions 1..3 refined by Gauss-Newton). Needs >= 6 points.
PoseSolution solve_epnp(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k);

/// Residual vector (2N) and its Jacobian (2N x 4) w.r.t. (yaw, tx, ty, tz).
struct YawResiduals {
  Eigen::VectorXd r;
  Eigen::Matrix<double, Eigen::Dynamic, 4> jacobian;
};
YawResiduals yaw_residuals(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                           const Pose& pose);

/// Damped Gauss-Newton over (yaw, tx, ty, tz). Iteration-cap exits are
/// returned with converged == false.
PoseSolution refine_yaw_pose(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                             const Pose& init, const PnPOptions& opts = {});

/// Grid over yaw in (-pi, pi]; translation by linear least squares per yaw,
/// scored by geometric RMSE, then one parabolic refinement step.
PoseSolution solve_pose_oracle(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                               double yaw_step);

/// EPnP, then (yaw-constrained mode) projection onto the yaw manifold and refinement.
PoseSolution solve_pose(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                        const PnPOptions& opts = {});

}  // namespace partlift
