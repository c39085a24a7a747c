#pragma once

// From per-detection network-style outputs to 3D boxes: template selection,
// shape rescaling and 2D/3D part matching.

#include <string>
#include <vector>

#include "partlift/codec.hpp"
#include "partlift/pose_solver.hpp"
#include "partlift/shape_bank.hpp"

namespace partlift {

inline constexpr double kNmsThreshold = 0.5;

struct DetectionRecord {
  ScoredBox box;
  /// Decoded part coordinates, pixels (2 x N).
  Points2 parts2d;
  /// N x 4 visibility class scores.
  VisibilityScores vis_scores;
  /// Log-space template similarity (3 x M).
  TemplateSimilarity template_sim;
  /// Image index within a multi-image file.
  int image = 0;
};

struct Recovered3D {
  Box3D box3d;
  Points3 parts3d;
  std::string model_id;
  double reproj_rmse = 0;
  PoseSolution solution;
};

struct TemplateChoice {
  std::size_t model = 0;
  Template3D dims;
};

/// argmin_m |sim_m|_2 (distance of r_m to (1,1,1) in log space), ties to the
/// lowest index; dims is bank template c scaled by exp(sim_c).
TemplateChoice select_template(const TemplateSimilarity& sim, const ShapeBank& bank);

Recovered3D recover_3d(const DetectionRecord& det, const ShapeBank& bank, const CameraIntrinsics& k,
                       const PnPOptions& opts = {});

struct InferenceResult {
  DetectionRecord record;
  Recovered3D recovered;
};

struct InferenceFailure {
  std::size_t record = 0;
  std::string reason;
};

struct InferenceOutput {
  std::vector<InferenceResult> results;  ///< descending score
  std::vector<InferenceFailure> failures;
};

/// NMS over the records' boxes, then recover_3d for each survivor. Records
/// from different images never suppress each other.
InferenceOutput run_inference(const std::vector<DetectionRecord>& records, const ShapeBank& bank,
                              const CameraIntrinsics& k, double nms_threshold = kNmsThreshold,
                              const PnPOptions& opts = {});

}  // namespace partlift
