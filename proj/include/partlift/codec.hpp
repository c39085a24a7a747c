#pragma once

// Training-target encodings and the multi-task losses. Every loss returns its
// value together with analytic gradients w.r.t. the predicted quantities.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "partlift/geom.hpp"
#include "partlift/shape_bank.hpp"

namespace partlift {

enum class Visibility : int { visible = 0, occluded = 1, self_occluded = 2, truncated = 3 };
inline constexpr int kVisibilityClasses = 4;

std::string_view to_string(Visibility v);
/// Throws ParseError for unknown names.
Visibility visibility_from_string(std::string_view name);

using VisibilityVector = std::vector<Visibility>;
/// 2 x N, part coordinates relative to a box.
using NormalizedParts = Points2;
/// 3 x M, column m = log(r_m) for bank model m.
using TemplateSimilarity = Eigen::Matrix3Xd;
/// N x 4 scores or logits, one row per part.
using VisibilityScores = Eigen::Matrix<double, Eigen::Dynamic, kVisibilityClasses>;

struct BoxDeltas {
  double dx = 0;
  double dy = 0;
  double dw = 0;
  double dh = 0;

  Eigen::Vector4d vec() const { return {dx, dy, dw, dh}; }
  static BoxDeltas from_vec(const Eigen::Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }
};

struct LossWeights {
  double cls = 1.0;
  double reg = 1.0;
  double parts = 3.0;
  double vis = 1.0;
  double temp = 1.0;
};

struct ProposalLabel {
  int cls = 0;  ///< 1 vehicle, 0 background
  std::optional<std::size_t> gt;
};

// ---- target encodings ------------------------------------------------------

/// delta_x = (proposal.cx - gt.cx) / gt.w, delta_w = log(proposal.w / gt.w); same for y/h.
BoxDeltas encode_box_deltas(const Box2D& proposal, const Box2D& gt);
/// The box gt' for which encode_box_deltas(proposal, gt') == deltas.
Box2D decode_box_deltas(const Box2D& proposal, const BoxDeltas& deltas);

NormalizedParts encode_parts(const Points2& parts, const Box2D& box);
Points2 decode_parts(const NormalizedParts& norm, const Box2D& box);

/// log(t / t_m) componentwise in (w, h, l) order for every bank model.
TemplateSimilarity encode_template_similarity(const Template3D& vehicle, const ShapeBank& bank);
/// Applies exp(sim_m) to bank template m.
Template3D apply_template_similarity(const Template3D& bank_template, const Eigen::Vector3d& log_ratio);

// ---- losses ----------------------------------------------------------------

struct ScalarLoss {
  double value = 0;
  double grad = 0;
};

struct Loss {
  double value = 0;
  Eigen::VectorXd grad;
};

ScalarLoss smooth_l1(double x);
/// Sum of elementwise smooth-L1.
Loss smooth_l1(const Eigen::Ref<const Eigen::VectorXd>& x);
/// -log softmax(logits)[cls]; throws IndexOutOfRange.
Loss softmax_log_loss(const Eigen::Ref<const Eigen::VectorXd>& logits, int cls);

struct DetectionLoss {
  double value = 0;
  Eigen::Vector2d grad_logits = Eigen::Vector2d::Zero();
  Eigen::Vector4d grad_deltas = Eigen::Vector4d::Zero();
};

/// lambda_cls P(logits, C) + lambda_reg C R(pred - target).
DetectionLoss detection_loss(const Eigen::Ref<const Eigen::VectorXd>& class_logits, const BoxDeltas& pred,
                             const ProposalLabel& label, const BoxDeltas& target, const LossWeights& w);

struct MatrixLoss {
  double value = 0;
  Eigen::MatrixXd grad;
};

MatrixLoss part_loss(const NormalizedParts& pred, const NormalizedParts& target, int cls, double lambda_parts);
MatrixLoss visibility_loss(const VisibilityScores& logits, const VisibilityVector& target, int cls, double lambda_vis);
MatrixLoss template_loss(const TemplateSimilarity& pred, const TemplateSimilarity& target, int cls,
                         double lambda_temp);

/// Predictions and targets attached to one proposal at one refinement level.
/// Parts are used at levels 2 and 3, visibility and template only at level 3.
struct ProposalTerms {
  Eigen::Vector2d class_logits = Eigen::Vector2d::Zero();
  BoxDeltas pred_deltas;
  BoxDeltas target_deltas;
  ProposalLabel label;
  NormalizedParts pred_parts;
  NormalizedParts target_parts;
  VisibilityScores vis_logits;
  VisibilityVector target_vis;
  TemplateSimilarity pred_template;
  TemplateSimilarity target_template;
};

struct LossBreakdown {
  double rpn = 0;     ///< level 1
  double level2 = 0;
  double level3 = 0;
  double total() const { return rpn + level2 + level3; }
};

/// Sum of level 1 (detection loss on anchors), level 2 (det + parts) and
/// level 3 (det + parts + visibility + template) terms.
LossBreakdown total_loss(const std::vector<ProposalTerms>& anchors, const std::vector<ProposalTerms>& level2,
                         const std::vector<ProposalTerms>& level3, const LossWeights& w);

// ---- gradient verification -------------------------------------------------

using LossFunction = std::function<Loss(const Eigen::VectorXd&)>;

inline constexpr double kGradCheckStep = 1e-5;

/// |analytic - numeric| / max(|analytic|, |numeric|, floor), maximized over coordinates.
double relative_error(double analytic, double numeric, double floor = 1e-3);

/// Central finite differences against f's analytic gradient at x.
double grad_check(const LossFunction& f, const Eigen::VectorXd& x, double step = kGradCheckStep);

struct GradientCheckEntry {
  std::string loss;
  int points = 0;
  double max_rel_error = 0;
  /// For C = 0 instances: largest |gradient| of gated terms (must be exactly 0).
  double gated_max_abs = 0;
};

/// Checks every loss at `points` seeded random inputs (N parts, M bank models).
std::vector<GradientCheckEntry> run_gradient_suite(unsigned long long seed, int points, int n_parts = 36,
                                                   int n_models = 4);

}  // namespace partlift
