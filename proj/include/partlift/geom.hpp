#pragma once

// Camera model, yaw-only rigid transforms, pinhole projection, box overlap and NMS.
//
// Camera frame: x right, y down, z forward. Yaw rotates about the camera y axis.
// Object frame: origin at the 3D box centroid, +x along the heading (length),
// +y down (height), +z to the vehicle's left (width).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "partlift/errors.hpp"

namespace partlift {

template <typename Scalar>
using Vec2T = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3T = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3T = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Points2T = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;
template <typename Scalar>
using Points3T = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

using Vec2 = Vec2T<double>;
using Vec3 = Vec3T<double>;
using Mat3 = Mat3T<double>;
/// Column k is part k.
using Points2 = Points2T<double>;
using Points3 = Points3T<double>;

inline constexpr double kMinDepth = 1e-6;

template <typename Scalar>
struct CameraIntrinsicsT {
  Scalar fx = 1;
  Scalar fy = 1;
  Scalar cx = 0;
  Scalar cy = 0;
  int img_w = 1;
  int img_h = 1;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw ValidationError("camera: focal lengths must be positive");
    if (img_w <= 0 || img_h <= 0) throw ValidationError("camera: image size must be positive");
  }

  /// Half-open image rectangle [0, img_w) x [0, img_h).
  bool in_image(const Vec2T<Scalar>& uv) const {
    return uv.x() >= 0 && uv.x() < Scalar(img_w) && uv.y() >= 0 && uv.y() < Scalar(img_h);
  }

  Mat3T<Scalar> matrix() const {
    Mat3T<Scalar> k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

/// Wraps an angle to (-pi, pi].
template <typename Scalar>
Scalar normalize_angle(Scalar a) {
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  Scalar r = std::remainder(a, two_pi);
  if (r <= -std::numbers::pi_v<Scalar>) r += two_pi;
  return r;
}

template <typename Scalar>
struct PoseT {
  Scalar yaw = 0;
  Vec3T<Scalar> t = Vec3T<Scalar>::Zero();
};

template <typename Scalar>
Mat3T<Scalar> rotation_yaw(Scalar yaw) {
  const Scalar c = std::cos(yaw), s = std::sin(yaw);
  Mat3T<Scalar> r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

/// d R_yaw / d yaw.
template <typename Scalar>
Mat3T<Scalar> rotation_yaw_derivative(Scalar yaw) {
  const Scalar c = std::cos(yaw), s = std::sin(yaw);
  Mat3T<Scalar> r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}

/// Inverse of rotation_yaw on the heading column; exact for pure yaw rotations.
template <typename Derived>
typename Derived::Scalar yaw_from_rotation(const Eigen::MatrixBase<Derived>& r) {
  return normalize_angle(std::atan2(-r(2, 0), r(0, 0)));
}

/// Object frame -> camera frame.
template <typename Scalar>
Points3T<Scalar> transform_points(const PoseT<Scalar>& pose, const Points3T<Scalar>& pts) {
  Points3T<Scalar> out = rotation_yaw(normalize_angle(pose.yaw)) * pts;
  out.colwise() += pose.t;
  return out;
}

template <typename Scalar>
Vec2T<Scalar> project_camera_point(const CameraIntrinsicsT<Scalar>& k, const Vec3T<Scalar>& x) {
  if (!(x.z() > Scalar(kMinDepth))) throw DegenerateDepth();
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

/// Pinhole projection of a point given in the object frame.
template <typename Scalar>
Vec2T<Scalar> project_point(const CameraIntrinsicsT<Scalar>& k, const PoseT<Scalar>& pose,
                            const Vec3T<Scalar>& p) {
  const Vec3T<Scalar> x = rotation_yaw(normalize_angle(pose.yaw)) * p + pose.t;
  return project_camera_point(k, x);
}

/// Projects camera-frame points; throws DegenerateDepth naming the first bad column.
template <typename Scalar>
Points2T<Scalar> project_camera_points(const CameraIntrinsicsT<Scalar>& k, const Points3T<Scalar>& x) {
  Points2T<Scalar> out(2, x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Scalar z = x(2, i);
    if (!(z > Scalar(kMinDepth))) throw DegenerateDepth(static_cast<std::size_t>(i));
    out(0, i) = k.fx * x(0, i) / z + k.cx;
    out(1, i) = k.fy * x(1, i) / z + k.cy;
  }
  return out;
}

template <typename Scalar>
Points2T<Scalar> project_shape(const CameraIntrinsicsT<Scalar>& k, const PoseT<Scalar>& pose,
                               const Points3T<Scalar>& shape) {
  return project_camera_points(k, transform_points(pose, shape));
}

/// Center-format box: (cx, cy) center, (w, h) size, pixels.
template <typename Scalar>
struct Box2T {
  Scalar cx = 0;
  Scalar cy = 0;
  Scalar w = 1;
  Scalar h = 1;

  Scalar x1() const { return cx - w / 2; }
  Scalar y1() const { return cy - h / 2; }
  Scalar x2() const { return cx + w / 2; }
  Scalar y2() const { return cy + h / 2; }
  Scalar area() const { return w * h; }

  static Box2T from_corners(Scalar x1, Scalar y1, Scalar x2, Scalar y2) {
    return {(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
  }

  bool operator==(const Box2T&) const = default;
};

template <typename Scalar>
struct ScoredBoxT {
  Box2T<Scalar> box;
  Scalar score = 0;
};

/// Template (w, h, l) in meters.
template <typename Scalar>
struct Template3T {
  Scalar w = 1;
  Scalar h = 1;
  Scalar l = 1;

  /// Canonical-axis order (x <-> l, y <-> h, z <-> w).
  Vec3T<Scalar> xyz() const { return {l, h, w}; }
  Vec3T<Scalar> whl() const { return {w, h, l}; }
  bool operator==(const Template3T&) const = default;
};

template <typename Scalar>
struct Box3T {
  Vec3T<Scalar> center = Vec3T<Scalar>::Zero();
  Scalar yaw = 0;
  Template3T<Scalar> dims;

  PoseT<Scalar> pose() const { return {yaw, center}; }
};

using CameraIntrinsics = CameraIntrinsicsT<double>;
using Pose = PoseT<double>;
using Box2D = Box2T<double>;
using ScoredBox = ScoredBoxT<double>;
using Template3D = Template3T<double>;
using Box3D = Box3T<double>;

template <typename Scalar>
Scalar iou(const Box2T<Scalar>& a, const Box2T<Scalar>& b) {
  const Scalar iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const Scalar ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0 || ih <= 0) return 0;
  const Scalar inter = iw * ih;
  // Areas from the same corner arithmetic keep iou(a, a) exactly 1.
  const Scalar area_a = (a.x2() - a.x1()) * (a.y2() - a.y1());
  const Scalar area_b = (b.x2() - b.x1()) * (b.y2() - b.y1());
  const Scalar uni = area_a + area_b - inter;
  return uni > 0 ? std::clamp(inter / uni, Scalar(0), Scalar(1)) : Scalar(0);
}

/// Score-descending order, ties by lower index.
template <typename Scalar>
std::vector<std::size_t> score_order(std::span<const ScoredBoxT<Scalar>> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return dets[i].score > dets[j].score; });
  return order;
}

/// Greedy NMS. A box survives iff its IoU with every kept box is <= iou_threshold.
/// Returned indices are in descending score order.
template <typename Scalar>
std::vector<std::size_t> nms(std::span<const ScoredBoxT<Scalar>> dets, Scalar iou_threshold) {
  std::vector<std::size_t> kept;
  for (std::size_t i : score_order(dets)) {
    const bool keep = std::all_of(kept.begin(), kept.end(), [&](std::size_t j) {
      return iou(dets[i].box, dets[j].box) <= iou_threshold;
    });
    if (keep) kept.push_back(i);
  }
  return kept;
}

inline std::vector<std::size_t> nms(const std::vector<ScoredBox>& dets, double iou_threshold) {
  return nms(std::span<const ScoredBox>(dets), iou_threshold);
}

}  // namespace partlift
