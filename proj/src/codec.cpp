#include "partlift/codec.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace partlift {

std::string_view to_string(Visibility v) {
  switch (v) {
    case Visibility::visible: return "visible";
    case Visibility::occluded: return "occluded";
    case Visibility::self_occluded: return "self_occluded";
    case Visibility::truncated: return "truncated";
  }
  return "visible";
}

Visibility visibility_from_string(std::string_view name) {
  for (int c = 0; c < kVisibilityClasses; ++c)
    if (to_string(static_cast<Visibility>(c)) == name) return static_cast<Visibility>(c);
  throw ParseError("unknown visibility class '" + std::string(name) + "'");
}

BoxDeltas encode_box_deltas(const Box2D& proposal, const Box2D& gt) {
  return {(proposal.cx - gt.cx) / gt.w, (proposal.cy - gt.cy) / gt.h, std::log(proposal.w / gt.w),
          std::log(proposal.h / gt.h)};
}

Box2D decode_box_deltas(const Box2D& proposal, const BoxDeltas& d) {
  Box2D gt;
  gt.w = proposal.w / std::exp(d.dw);
  gt.h = proposal.h / std::exp(d.dh);
  gt.cx = proposal.cx - d.dx * gt.w;
  gt.cy = proposal.cy - d.dy * gt.h;
  return gt;
}

NormalizedParts encode_parts(const Points2& parts, const Box2D& box) {
  NormalizedParts out(2, parts.cols());
  out.row(0) = (parts.row(0).array() - box.cx) / box.w;
  out.row(1) = (parts.row(1).array() - box.cy) / box.h;
  return out;
}

Points2 decode_parts(const NormalizedParts& norm, const Box2D& box) {
  Points2 out(2, norm.cols());
  out.row(0) = norm.row(0).array() * box.w + box.cx;
  out.row(1) = norm.row(1).array() * box.h + box.cy;
  return out;
}

TemplateSimilarity encode_template_similarity(const Template3D& vehicle, const ShapeBank& bank) {
  TemplateSimilarity sim(3, static_cast<Eigen::Index>(bank.size()));
  for (std::size_t m = 0; m < bank.size(); ++m)
    sim.col(static_cast<Eigen::Index>(m)) = vehicle.whl().cwiseQuotient(bank[m].dims.whl()).array().log();
  return sim;
}

Template3D apply_template_similarity(const Template3D& t, const Eigen::Vector3d& log_ratio) {
  const Eigen::Vector3d r = log_ratio.array().exp();
  return {t.w * r[0], t.h * r[1], t.l * r[2]};
}

ScalarLoss smooth_l1(double x) {
  const double a = std::abs(x);
  if (a < 1.0) return {0.5 * x * x, x};
  return {a - 0.5, x > 0 ? 1.0 : -1.0};
}

Loss smooth_l1(const Eigen::Ref<const Eigen::VectorXd>& x) {
  Loss out{0.0, Eigen::VectorXd(x.size())};
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto s = smooth_l1(x[i]);
    out.value += s.value;
    out.grad[i] = s.grad;
  }
  return out;
}

Loss softmax_log_loss(const Eigen::Ref<const Eigen::VectorXd>& logits, int cls) {
  if (logits.size() < 2) throw ShapeMismatch("softmax_log_loss: need at least two logits");
  if (cls < 0 || cls >= logits.size()) throw IndexOutOfRange("softmax_log_loss: class index out of range");
  const double mx = logits.maxCoeff();
  const Eigen::ArrayXd e = (logits.array() - mx).exp();
  const double z = e.sum();
  Loss out;
  out.value = std::log(z) + mx - logits[cls];
  out.grad = e / z;
  out.grad[cls] -= 1.0;
  return out;
}

DetectionLoss detection_loss(const Eigen::Ref<const Eigen::VectorXd>& class_logits, const BoxDeltas& pred,
                             const ProposalLabel& label, const BoxDeltas& target, const LossWeights& w) {
  if (class_logits.size() != 2) throw ShapeMismatch("detection_loss: expected 2 class logits");
  const Loss p = softmax_log_loss(class_logits, label.cls);
  DetectionLoss out;
  out.value = w.cls * p.value;
  out.grad_logits = w.cls * p.grad;
  if (label.cls == 1) {
    const Loss r = smooth_l1(pred.vec() - target.vec());
    out.value += w.reg * r.value;
    out.grad_deltas = w.reg * r.grad;
  }
  return out;
}

namespace {

MatrixLoss gated_smooth_l1(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, int cls, double lambda,
                           const char* what) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeMismatch(std::string(what) + ": prediction and target shapes differ");
  MatrixLoss out{0.0, Eigen::MatrixXd::Zero(pred.rows(), pred.cols())};
  if (cls != 1) return out;
  const Eigen::MatrixXd diff = pred - target;
  const Loss r = smooth_l1(Eigen::Map<const Eigen::VectorXd>(diff.data(), diff.size()));
  out.value = lambda * r.value;
  out.grad = lambda * Eigen::Map<const Eigen::MatrixXd>(r.grad.data(), pred.rows(), pred.cols());
  return out;
}

}  // namespace

MatrixLoss part_loss(const NormalizedParts& pred, const NormalizedParts& target, int cls, double lambda_parts) {
  return gated_smooth_l1(pred, target, cls, lambda_parts, "part_loss");
}

MatrixLoss template_loss(const TemplateSimilarity& pred, const TemplateSimilarity& target, int cls,
                         double lambda_temp) {
  return gated_smooth_l1(pred, target, cls, lambda_temp, "template_loss");
}

MatrixLoss visibility_loss(const VisibilityScores& logits, const VisibilityVector& target, int cls,
                           double lambda_vis) {
  if (static_cast<std::size_t>(logits.rows()) != target.size())
    throw ShapeMismatch("visibility_loss: logits rows != target length");
  MatrixLoss out{0.0, Eigen::MatrixXd::Zero(logits.rows(), kVisibilityClasses)};
  if (cls != 1) return out;
  for (Eigen::Index k = 0; k < logits.rows(); ++k) {
    const Loss p = softmax_log_loss(logits.row(k).transpose(), static_cast<int>(target[k]));
    out.value += lambda_vis * p.value;
    out.grad.row(k) = lambda_vis * p.grad.transpose();
  }
  return out;
}

LossBreakdown total_loss(const std::vector<ProposalTerms>& anchors, const std::vector<ProposalTerms>& level2,
                         const std::vector<ProposalTerms>& level3, const LossWeights& w) {
  LossBreakdown out;
  for (const auto& a : anchors)
    out.rpn += detection_loss(a.class_logits, a.pred_deltas, a.label, a.target_deltas, w).value;
  for (const auto& p : level2) {
    out.level2 += detection_loss(p.class_logits, p.pred_deltas, p.label, p.target_deltas, w).value;
    out.level2 += part_loss(p.pred_parts, p.target_parts, p.label.cls, w.parts).value;
  }
  for (const auto& p : level3) {
    out.level3 += detection_loss(p.class_logits, p.pred_deltas, p.label, p.target_deltas, w).value;
    out.level3 += part_loss(p.pred_parts, p.target_parts, p.label.cls, w.parts).value;
    out.level3 += visibility_loss(p.vis_logits, p.target_vis, p.label.cls, w.vis).value;
    out.level3 += template_loss(p.pred_template, p.target_template, p.label.cls, w.temp).value;
  }
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

double grad_check(const LossFunction& f, const Eigen::VectorXd& x, double step) {
  const Loss at = f(x);
  if (at.grad.size() != x.size()) throw ShapeMismatch("grad_check: gradient size differs from input size");
  double worst = 0.0;
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double fp = f(probe).value;
    probe[i] = x[i] - step;
    const double fm = f(probe).value;
    probe[i] = x[i];
    worst = std::max(worst, relative_error(at.grad[i], (fp - fm) / (2 * step)));
  }
  return worst;
}

namespace {

Eigen::VectorXd flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Eigen::MatrixXd unflat(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

}  // namespace

std::vector<GradientCheckEntry> run_gradient_suite(unsigned long long seed, int points, int n_parts, int n_models) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-3.0, 3.0);
  auto randn = [&](Eigen::Index n, double sigma) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = sigma * normal(rng);
    return v;
  };
  auto random_class = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  const LossWeights w;

  GradientCheckEntry sl1{"smooth_l1"}, sm{"softmax_log_loss"}, det{"detection_loss"}, prt{"part_loss"},
      vis{"visibility_loss"}, tmp{"template_loss"};

  for (int i = 0; i < points; ++i) {
    {
      const double x0 = uni(rng);
      auto f = [](const Eigen::VectorXd& x) {
        const auto s = smooth_l1(x[0]);
        return Loss{s.value, Eigen::VectorXd::Constant(1, s.grad)};
      };
      sl1.max_rel_error = std::max(sl1.max_rel_error, grad_check(f, Eigen::VectorXd::Constant(1, x0)));
    }
    {
      const int cls = random_class(4);
      auto f = [cls](const Eigen::VectorXd& x) { return softmax_log_loss(x, cls); };
      sm.max_rel_error = std::max(sm.max_rel_error, grad_check(f, randn(4, 2.0)));
    }
    {
      const BoxDeltas target = BoxDeltas::from_vec(randn(4, 0.5));
      for (int cls : {1, 0}) {
        const ProposalLabel label{cls, std::nullopt};
        auto f = [&](const Eigen::VectorXd& x) {
          const auto d = detection_loss(x.head<2>(), BoxDeltas::from_vec(x.segment<4>(2)), label, target, w);
          Eigen::VectorXd g(6);
          g << d.grad_logits, d.grad_deltas;
          return Loss{d.value, g};
        };
        const Eigen::VectorXd x = randn(6, 1.5);
        if (cls == 1) {
          det.max_rel_error = std::max(det.max_rel_error, grad_check(f, x));
        } else {
          det.gated_max_abs = std::max(det.gated_max_abs, f(x).grad.tail<4>().cwiseAbs().maxCoeff());
        }
      }
    }
    {
      const NormalizedParts target = unflat(randn(2 * n_parts, 0.5), 2, n_parts);
      for (int cls : {1, 0}) {
        auto f = [&](const Eigen::VectorXd& x) {
          const auto l = part_loss(unflat(x, 2, n_parts), target, cls, w.parts);
          return Loss{l.value, flat(l.grad)};
        };
        const Eigen::VectorXd x = flat(target) + randn(2 * n_parts, 1.0);
        if (cls == 1) {
          prt.max_rel_error = std::max(prt.max_rel_error, grad_check(f, x));
        } else {
          prt.gated_max_abs = std::max(prt.gated_max_abs, f(x).grad.cwiseAbs().maxCoeff());
        }
      }
    }
    {
      VisibilityVector target(static_cast<std::size_t>(n_parts));
      for (auto& t : target) t = static_cast<Visibility>(random_class(kVisibilityClasses));
      for (int cls : {1, 0}) {
        auto f = [&](const Eigen::VectorXd& x) {
          const auto l = visibility_loss(unflat(x, n_parts, kVisibilityClasses), target, cls, w.vis);
          return Loss{l.value, flat(l.grad)};
        };
        const Eigen::VectorXd x = randn(n_parts * kVisibilityClasses, 2.0);
        if (cls == 1) {
          vis.max_rel_error = std::max(vis.max_rel_error, grad_check(f, x));
        } else {
          vis.gated_max_abs = std::max(vis.gated_max_abs, f(x).grad.cwiseAbs().maxCoeff());
        }
      }
    }
    {
      const TemplateSimilarity target = unflat(randn(3 * n_models, 0.3), 3, n_models);
      for (int cls : {1, 0}) {
        auto f = [&](const Eigen::VectorXd& x) {
          const auto l = template_loss(unflat(x, 3, n_models), target, cls, w.temp);
          return Loss{l.value, flat(l.grad)};
        };
        const Eigen::VectorXd x = flat(target) + randn(3 * n_models, 1.0);
        if (cls == 1) {
          tmp.max_rel_error = std::max(tmp.max_rel_error, grad_check(f, x));
        } else {
          tmp.gated_max_abs = std::max(tmp.gated_max_abs, f(x).grad.cwiseAbs().maxCoeff());
        }
      }
    }
  }
  std::vector<GradientCheckEntry> out{sl1, sm, det, prt, vis, tmp};
  for (auto& e : out) e.points = points;
  return out;
}

}  // namespace partlift
