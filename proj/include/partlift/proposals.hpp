#pragma once

// Anchor grids, proposal/ground-truth assignment and box refinement geometry.

#include <vector>

#include "partlift/codec.hpp"
#include "partlift/geom.hpp"

namespace partlift {

inline constexpr double kPositiveIou = 0.7;
inline constexpr int kProposalCount = 200;

/// Anchors are area preserving: ratio r = w / h and scale s = sqrt(w * h).
struct AnchorConfig {
  std::vector<double> aspect_ratios = {0.5, 0.7, 1.0, 1.5, 2.0, 2.5, 3.0};
  std::vector<double> scales = default_scales();
  double stride = 16.0;

  std::size_t anchors_per_location() const { return aspect_ratios.size() * scales.size(); }
  /// 10 values, geometric from 16 to 600 px.
  static std::vector<double> default_scales();
  void validate() const;
};

/// Location-major, then ratio, then scale. Anchors may extend past the image.
std::vector<Box2D> generate_anchors(const AnchorConfig& cfg, int img_w, int img_h);

/// Positive iff the best IoU over gts is strictly greater than pos_threshold.
std::vector<ProposalLabel> assign_labels(const std::vector<Box2D>& proposals, const std::vector<Box2D>& gts,
                                         double pos_threshold = kPositiveIou);

/// Clips to [0, img_w] x [0, img_h] keeping at least 1 px per side.
Box2D clip_box(const Box2D& box, int img_w, int img_h);

std::vector<Box2D> refine_boxes(const std::vector<Box2D>& boxes, const std::vector<BoxDeltas>& deltas, int img_w,
                                int img_h);

}  // namespace partlift
