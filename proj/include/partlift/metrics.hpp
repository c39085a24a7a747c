#pragma once

// Detection and many-task evaluation: AP, AOS, ALP, part localization,
// visibility accuracy and 3D template accuracy, with KITTI difficulty levels.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "partlift/codec.hpp"
#include "partlift/geom.hpp"

namespace partlift {

enum class Interpolation { eleven_point, forty_one_point };
enum class Difficulty { easy, moderate, hard, all };

std::string_view to_string(Interpolation i);
std::string_view to_string(Difficulty d);
Difficulty difficulty_from_string(std::string_view s);

struct EvalConfig {
  double iou_threshold = 0.7;
  std::vector<double> alp_distances = {1.0, 2.0};
  double part_dist_threshold = 20.0;
  double part_norm_height = 155.0;
  double template_rel_tol = 0.2;
  Interpolation interpolation = Interpolation::eleven_point;
  Difficulty difficulty = Difficulty::all;

  void validate() const;
};

enum class MatchStatus { true_positive, false_positive, ignored };

struct MatchResult {
  std::vector<MatchStatus> det_status;
  /// Matched GT per detection, -1 when unmatched.
  std::vector<int> det_gt;
  std::vector<bool> gt_matched;
};

/// Greedy in descending score order (ties by index). A detection claims the
/// unmatched, non-ignored GT of highest IoU >= threshold; failing that it is
/// ignored if it overlaps an ignored GT by >= threshold, else a false positive.
MatchResult match_detections(const std::vector<ScoredBox>& dets, const std::vector<Box2D>& gts, double iou_threshold,
                             const std::vector<bool>& gt_ignore = {});

/// One detection after matching, pooled across images.
struct MatchedDetection {
  double score = 0;
  MatchStatus status = MatchStatus::false_positive;
  double det_yaw = 0;
  double gt_yaw = 0;
  Vec3 det_center = Vec3::Zero();
  Vec3 gt_center = Vec3::Zero();
};

/// Recall sample points: {0, 0.1, ..., 1} or {0, 1/40, ..., 1}.
std::vector<double> recall_samples(Interpolation interp);

/// Interpolated curve metric where each true positive contributes `tp_weight`
/// to the precision numerator. Detections with equal score form one curve point.
double interpolated_precision(const std::vector<MatchedDetection>& dets, std::size_t n_gt, Interpolation interp,
                              const std::function<double(const MatchedDetection&)>& tp_weight);

double average_precision(const std::vector<MatchedDetection>& dets, std::size_t n_gt,
                         Interpolation interp = Interpolation::eleven_point);
/// True positives weighted by (1 + cos(yaw error)) / 2.
double average_orientation_similarity(const std::vector<MatchedDetection>& dets, std::size_t n_gt,
                                      Interpolation interp = Interpolation::eleven_point);
/// True positives weighted by [|center error| < distance].
double average_localization_precision(const std::vector<MatchedDetection>& dets, std::size_t n_gt, double distance,
                                      Interpolation interp = Interpolation::eleven_point);

struct DifficultyMetadata {
  double box_height = 0;  ///< pixels
  int occlusion = 0;
  double truncation = 0;
};

struct DifficultyThresholds {
  double min_height;
  int max_occlusion;
  double max_truncation;
};

/// KITTI object benchmark thresholds; Difficulty::all accepts everything.
DifficultyThresholds difficulty_thresholds(Difficulty level);

struct DifficultySplit {
  std::vector<std::size_t> kept;
  std::vector<bool> ignore;
};

DifficultySplit difficulty_filter(const std::vector<DifficultyMetadata>& gts, Difficulty level);

/// Parts with |error| * norm_height / gt_box_height < threshold, over all given pairs.
std::optional<double> part_localization_rate(const std::vector<Points2>& det_parts,
                                             const std::vector<Points2>& gt_parts,
                                             const std::vector<double>& gt_box_heights, const EvalConfig& cfg);
std::optional<double> visibility_accuracy(const std::vector<VisibilityVector>& det,
                                          const std::vector<VisibilityVector>& gt);
bool template_correct(const Template3D& det, const Template3D& gt, double rel_tol);
std::optional<double> template_accuracy(const std::vector<Template3D>& det, const std::vector<Template3D>& gt,
                                        double rel_tol);

/// Row of argmax class per part.
VisibilityVector visibility_argmax(const VisibilityScores& scores);

struct EvalDetection {
  ScoredBox box;
  Box3D box3d;
  std::optional<Points2> parts2d;
  std::optional<VisibilityVector> visibility;
};

struct EvalGroundTruth {
  Box2D box;
  Box3D box3d;
  std::optional<Points2> parts2d;
  std::optional<VisibilityVector> visibility;
  std::optional<int> occlusion;
  std::optional<double> truncation;
};

struct EvalImage {
  std::vector<EvalDetection> dets;
  std::vector<EvalGroundTruth> gts;
};

struct EvalReport {
  double ap = 0;
  double aos = 0;
  std::map<double, double> alp;
  std::optional<double> part_loc;
  std::optional<double> vis_acc;
  std::optional<double> template_acc;
  std::size_t n_images = 0;
  std::size_t n_gt = 0;
  std::size_t n_det = 0;
};

EvalReport evaluate(const std::vector<EvalImage>& images, const EvalConfig& cfg);

}  // namespace partlift
