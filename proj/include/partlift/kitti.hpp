#pragma once

// KITTI object-detection labels and calibration.
//
// Label locations are box bottom centers in the file; they are converted to
// centroids (y - h/2) on read and back on write, so every Box3D in memory is
// centroid-based.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "partlift/annotator.hpp"
#include "partlift/geom.hpp"

namespace partlift {

struct KittiObject {
  std::string type;
  double truncation = 0;
  int occlusion = 0;
  double alpha = 0;
  Box2D box;
  /// Centroid, rotation_y and (w, h, l).
  Box3D box3d;
  std::optional<double> score;

  bool dont_care() const { return type == "DontCare"; }
};

/// All label lines in file order, DontCare included.
struct KittiLabels {
  std::vector<KittiObject> objects;
};

/// Car, Van and Truck.
bool is_vehicle_class(std::string_view type);

KittiLabels parse_kitti_labels(std::string_view text);
std::string write_kitti_labels(const KittiLabels& labels);

/// Intrinsics from the P2 row. Image size is not part of the calib file.
CameraIntrinsics parse_kitti_calib(std::string_view text, int img_w = 1242, int img_h = 375);

/// Non-DontCare objects; restricted to vehicle classes unless include_all.
std::vector<const KittiObject*> kitti_objects(const KittiLabels& labels, bool include_all = false);
std::vector<Box2D> kitti_ignore_regions(const KittiLabels& labels);
WeakAnnotation to_weak_annotation(const KittiObject& obj);

struct KittiFrame {
  KittiLabels labels;
  CameraIntrinsics camera;
};

KittiFrame parse_kitti(std::string_view label_text, std::string_view calib_text);

}  // namespace partlift
