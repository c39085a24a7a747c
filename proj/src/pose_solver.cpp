#include "partlift/pose_solver.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace partlift {

void PnPOptions::validate() const {
  if (max_iters < 1) throw ValidationError("pnp: max_iters must be >= 1");
  if (!(tol > 0)) throw ValidationError("pnp: tol must be positive");
}

namespace {

void check_correspondences(const Points3& shape3d, const Points2& shape2d) {
  if (shape3d.cols() != shape2d.cols()) throw ShapeMismatch("pose: 3D and 2D part counts differ");
  if (!shape3d.allFinite() || !shape2d.allFinite()) throw DegenerateConfiguration("pose: non-finite input");
}

double weighted_cost(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k, const Pose& pose,
                     const std::vector<double>& w) {
  const Points2 proj = project_shape(k, pose, shape3d);
  const Eigen::VectorXd sq = (proj - shape2d).colwise().squaredNorm().transpose();
  if (w.empty()) return sq.sum();
  return Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())).dot(sq);
}

double rmse_or_inf(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k, const Pose& pose) {
  try {
    return reprojection_error(shape3d, shape2d, k, pose);
  } catch (const DegenerateDepth&) {
    return std::numeric_limits<double>::infinity();
  }
}

// ---- EPnP ------------------------------------------------------------------

constexpr std::array<std::array<int, 2>, 6> kPairs = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

using Vec4 = Eigen::Vector4d;
using L6x10 = Eigen::Matrix<double, 6, 10>;
using Rho = Eigen::Matrix<double, 6, 1>;

// R, t minimizing |R pw + t - pc| (Kabsch).
void absolute_orientation(const Points3& pw, const Points3& pc, Mat3& r, Vec3& t) {
  const Vec3 mw = pw.rowwise().mean(), mc = pc.rowwise().mean();
  const Mat3 h = (pc.colwise() - mc) * (pw.colwise() - mw).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  r = svd.matrixU() * d * svd.matrixV().transpose();
  t = mc - r * mw;
}

double rigid_rmse(const Points3& pw, const Points2& uv, const CameraIntrinsics& k, const Mat3& r, const Vec3& t) {
  Points3 pc = r * pw;
  pc.colwise() += t;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pc.cols(); ++i) {
    if (!(pc(2, i) > kMinDepth)) return std::numeric_limits<double>::infinity();
    const double u = k.fx * pc(0, i) / pc(2, i) + k.cx, v = k.fy * pc(1, i) / pc(2, i) + k.cy;
    sum += (u - uv(0, i)) * (u - uv(0, i)) + (v - uv(1, i)) * (v - uv(1, i));
  }
  return std::sqrt(sum / static_cast<double>(pc.cols()));
}

Eigen::Matrix<double, 10, 1> beta_products(const Vec4& b) {
  Eigen::Matrix<double, 10, 1> p;
  p << b[0] * b[0], b[0] * b[1], b[1] * b[1], b[0] * b[2], b[1] * b[2], b[2] * b[2], b[0] * b[3], b[1] * b[3],
      b[2] * b[3], b[3] * b[3];
  return p;
}

void refine_betas(const L6x10& l, const Rho& rho, Vec4& b) {
  for (int it = 0; it < 5; ++it) {
    Eigen::Matrix<double, 6, 4> a;
    for (int row = 0; row < 6; ++row) {
      const auto& c = l.row(row);
      a(row, 0) = 2 * c[0] * b[0] + c[1] * b[1] + c[3] * b[2] + c[6] * b[3];
      a(row, 1) = c[1] * b[0] + 2 * c[2] * b[1] + c[4] * b[2] + c[7] * b[3];
      a(row, 2) = c[3] * b[0] + c[4] * b[1] + 2 * c[5] * b[2] + c[8] * b[3];
      a(row, 3) = c[6] * b[0] + c[7] * b[1] + c[8] * b[2] + 2 * c[9] * b[3];
    }
    const Rho res = rho - l * beta_products(b);
    b += a.colPivHouseholderQr().solve(res);
  }
}

template <int Cols>
Eigen::Matrix<double, Cols, 1> solve_columns(const L6x10& l, const Rho& rho, const std::array<int, Cols>& cols) {
  Eigen::Matrix<double, 6, Cols> sub;
  for (int c = 0; c < Cols; ++c) sub.col(c) = l.col(cols[c]);
  return sub.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(rho);
}

}  // namespace

double reprojection_error(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                          const Pose& pose) {
  check_correspondences(shape3d, shape2d);
  if (shape3d.cols() == 0) return 0.0;
  const Points2 proj = project_shape(k, pose, shape3d);
  return std::sqrt((proj - shape2d).colwise().squaredNorm().mean());
}

PoseSolution solve_epnp(const Points3& pw, const Points2& uv, const CameraIntrinsics& k) {
  check_correspondences(pw, uv);
  const Eigen::Index n = pw.cols();
  if (n < 6) throw DegenerateConfiguration("epnp: at least 6 correspondences required");

  {
    const Points2 centered = uv.colwise() - uv.rowwise().mean();
    const Eigen::Vector2d sv = Eigen::JacobiSVD<Eigen::Matrix2d>(centered * centered.transpose()).singularValues();
    if (!(sv[0] > 1e-12) || sv[1] < 1e-12 * sv[0])
      throw DegenerateConfiguration("epnp: image points are coincident or collinear");
  }

  // Control points: centroid plus principal directions.
  std::array<Vec3, 4> cw;
  cw[0] = pw.rowwise().mean();
  const Points3 centered = pw.colwise() - cw[0];
  Eigen::SelfAdjointEigenSolver<Mat3> pca(centered * centered.transpose());
  const Vec3 ev = pca.eigenvalues();
  if (!(ev[2] > 0) || ev[0] < 1e-10 * ev[2]) throw DegenerateConfiguration("epnp: 3D points are planar or degenerate");
  for (int j = 0; j < 3; ++j) cw[j + 1] = cw[0] + std::sqrt(ev[2 - j] / static_cast<double>(n)) * pca.eigenvectors().col(2 - j);

  Mat3 cc;
  for (int j = 0; j < 3; ++j) cc.col(j) = cw[j + 1] - cw[0];
  const Eigen::Matrix<double, 3, Eigen::Dynamic> a123 = cc.inverse() * centered;
  Eigen::Matrix<double, 4, Eigen::Dynamic> alphas(4, n);
  alphas.row(0) = Eigen::RowVectorXd::Ones(n) - a123.colwise().sum();
  alphas.bottomRows<3>() = a123;

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 12);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double a = alphas(j, i);
      m(2 * i, 3 * j) = a * k.fx;
      m(2 * i, 3 * j + 2) = a * (k.cx - uv(0, i));
      m(2 * i + 1, 3 * j + 1) = a * k.fy;
      m(2 * i + 1, 3 * j + 2) = a * (k.cy - uv(1, i));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(m.transpose() * m);
  const auto& vecs = eig.eigenvectors();  // ascending eigenvalues

  L6x10 l;
  Rho rho;
  for (int p = 0; p < 6; ++p) {
    const auto [a, b] = kPairs[p];
    std::array<Vec3, 4> dv;
    for (int i = 0; i < 4; ++i) dv[i] = vecs.col(i).segment<3>(3 * a) - vecs.col(i).segment<3>(3 * b);
    l(p, 0) = dv[0].dot(dv[0]);
    l(p, 1) = 2 * dv[0].dot(dv[1]);
    l(p, 2) = dv[1].dot(dv[1]);
    l(p, 3) = 2 * dv[0].dot(dv[2]);
    l(p, 4) = 2 * dv[1].dot(dv[2]);
    l(p, 5) = dv[2].dot(dv[2]);
    l(p, 6) = 2 * dv[0].dot(dv[3]);
    l(p, 7) = 2 * dv[1].dot(dv[3]);
    l(p, 8) = 2 * dv[2].dot(dv[3]);
    l(p, 9) = dv[3].dot(dv[3]);
    rho[p] = (cw[a] - cw[b]).squaredNorm();
  }

  std::array<Vec4, 3> candidates;
  {
    const auto b4 = solve_columns<4>(l, rho, {0, 1, 3, 6});
    Vec4 b;
    if (b4[0] < 0) {
      b[0] = std::sqrt(-b4[0]);
      b.tail<3>() = -b4.tail<3>() / b[0];
    } else {
      b[0] = std::sqrt(b4[0]);
      b.tail<3>() = b4.tail<3>() / (b[0] > 0 ? b[0] : 1.0);
    }
    candidates[0] = b;
  }
  {
    const auto b3 = solve_columns<3>(l, rho, {0, 1, 2});
    Vec4 b = Vec4::Zero();
    if (b3[0] < 0) {
      b[0] = std::sqrt(-b3[0]);
      b[1] = b3[2] < 0 ? std::sqrt(-b3[2]) : 0.0;
    } else {
      b[0] = std::sqrt(b3[0]);
      b[1] = b3[2] > 0 ? std::sqrt(b3[2]) : 0.0;
    }
    if (b3[1] < 0) b[0] = -b[0];
    candidates[1] = b;
  }
  {
    const auto b5 = solve_columns<5>(l, rho, {0, 1, 2, 3, 4});
    Vec4 b = Vec4::Zero();
    if (b5[0] < 0) {
      b[0] = std::sqrt(-b5[0]);
      b[1] = b5[2] < 0 ? std::sqrt(-b5[2]) : 0.0;
    } else {
      b[0] = std::sqrt(b5[0]);
      b[1] = b5[2] > 0 ? std::sqrt(b5[2]) : 0.0;
    }
    if (b5[1] < 0) b[0] = -b[0];
    b[2] = b[0] != 0 ? b5[3] / b[0] : 0.0;
    candidates[2] = b;
  }

  PoseSolution best;
  best.reproj_rmse = std::numeric_limits<double>::infinity();
  for (auto& b : candidates) {
    refine_betas(l, rho, b);
    Eigen::Matrix<double, 12, 1> ccam = Eigen::Matrix<double, 12, 1>::Zero();
    for (int i = 0; i < 4; ++i) ccam += b[i] * vecs.col(i);
    Points3 pc(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pc.col(i).setZero();
      for (int j = 0; j < 4; ++j) pc.col(i) += alphas(j, i) * ccam.segment<3>(3 * j);
    }
    if (pc.row(2).sum() < 0) pc = -pc;
    Mat3 r;
    Vec3 t;
    absolute_orientation(pw, pc, r, t);
    const double e = rigid_rmse(pw, uv, k, r, t);
    if (e < best.reproj_rmse || !std::isfinite(best.reproj_rmse)) {
      best.rotation = r;
      best.pose = {yaw_from_rotation(r), t};
      best.reproj_rmse = e;
    }
  }
  if (!std::isfinite(best.reproj_rmse)) throw BehindCamera("epnp: best candidate places parts behind the camera");
  best.converged = true;
  return best;
}

YawResiduals yaw_residuals(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                           const Pose& pose) {
  check_correspondences(shape3d, shape2d);
  const Eigen::Index n = shape3d.cols();
  const Mat3 r = rotation_yaw(pose.yaw), dr = rotation_yaw_derivative(pose.yaw);
  YawResiduals out{Eigen::VectorXd(2 * n), Eigen::Matrix<double, Eigen::Dynamic, 4>(2 * n, 4)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 x = r * shape3d.col(i) + pose.t;
    if (!(x.z() > kMinDepth)) throw DegenerateDepth(static_cast<std::size_t>(i));
    const Vec3 dx_dyaw = dr * shape3d.col(i);
    const double iz = 1.0 / x.z();
    Eigen::Matrix<double, 2, 3> dp;
    dp << k.fx * iz, 0, -k.fx * x.x() * iz * iz, 0, k.fy * iz, -k.fy * x.y() * iz * iz;
    out.r[2 * i] = k.fx * x.x() * iz + k.cx - shape2d(0, i);
    out.r[2 * i + 1] = k.fy * x.y() * iz + k.cy - shape2d(1, i);
    out.jacobian.block<2, 1>(2 * i, 0) = dp * dx_dyaw;
    out.jacobian.block<2, 3>(2 * i, 1) = dp;
  }
  return out;
}

PoseSolution refine_yaw_pose(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                             const Pose& init, const PnPOptions& opts) {
  check_correspondences(shape3d, shape2d);
  opts.validate();
  if (shape3d.cols() < opts.required_points())
    throw DegenerateConfiguration("refine_yaw_pose: too few correspondences");
  if (!(init.t.z() > 0)) throw DegenerateDepth();
  const auto& w = opts.part_weights;
  if (!w.empty() && static_cast<Eigen::Index>(w.size()) != shape3d.cols())
    throw ShapeMismatch("refine_yaw_pose: part_weights length differs from part count");
  Eigen::VectorXd wr(2 * shape3d.cols());
  for (Eigen::Index i = 0; i < shape3d.cols(); ++i) wr[2 * i] = wr[2 * i + 1] = w.empty() ? 1.0 : w[i];

  Pose pose{normalize_angle(init.yaw), init.t};
  double cost = weighted_cost(shape3d, shape2d, k, pose, w);
  double mu = 0.0;
  PoseSolution sol;
  for (int it = 1; it <= opts.max_iters; ++it) {
    sol.iterations = it;
    const YawResiduals res = yaw_residuals(shape3d, shape2d, k, pose);
    const Eigen::Matrix4d h = res.jacobian.transpose() * wr.asDiagonal() * res.jacobian;
    const Eigen::Vector4d g = res.jacobian.transpose() * wr.cwiseProduct(res.r);
    bool accepted = false, depth_failure = false;
    Eigen::Vector4d step = Eigen::Vector4d::Zero();
    while (mu < 1e12) {
      Eigen::Matrix4d damped = h;
      damped.diagonal() += mu * h.diagonal().cwiseMax(1e-12);
      step = -damped.ldlt().solve(g);
      if (!step.allFinite()) throw DegenerateConfiguration("refine_yaw_pose: singular normal equations");
      if (step.norm() < opts.tol) {
        sol.converged = true;
        break;
      }
      const Pose trial{normalize_angle(pose.yaw + step[0]), pose.t + step.tail<3>()};
      double trial_cost;
      try {
        trial_cost = weighted_cost(shape3d, shape2d, k, trial, w);
        depth_failure = false;
      } catch (const DegenerateDepth&) {
        trial_cost = std::numeric_limits<double>::infinity();
        depth_failure = true;
      }
      if (trial_cost <= cost) {
        pose = trial;
        cost = trial_cost;
        mu = mu > 1e-9 ? mu / 10 : 0.0;
        accepted = true;
        break;
      }
      mu = mu == 0.0 ? 1e-4 : mu * 10;
    }
    if (sol.converged) break;
    if (!accepted) {
      if (depth_failure) throw DegenerateDepth();
      // No descent direction left at machine precision: stationary point.
      sol.converged = true;
      break;
    }
    if (step.norm() < opts.tol) {
      sol.converged = true;
      break;
    }
  }
  sol.pose = pose;
  sol.rotation = rotation_yaw(pose.yaw);
  sol.reproj_rmse = reprojection_error(shape3d, shape2d, k, pose);
  return sol;
}

namespace {

Vec3 translation_for_yaw(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k, double yaw) {
  const Points3 xr = rotation_yaw(yaw) * shape3d;
  const Eigen::Index n = shape3d.cols();
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d ru(k.fx, 0, k.cx - shape2d(0, i));
    const Eigen::Vector3d rv(0, k.fy, k.cy - shape2d(1, i));
    const double bu = -ru.dot(xr.col(i)), bv = -rv.dot(xr.col(i));
    ata += ru * ru.transpose() + rv * rv.transpose();
    atb += ru * bu + rv * bv;
  }
  return ata.ldlt().solve(atb);
}

}  // namespace

PoseSolution solve_pose_oracle(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                               double yaw_step) {
  check_correspondences(shape3d, shape2d);
  if (!(yaw_step > 0)) throw ValidationError("oracle: yaw_step must be positive");
  const double two_pi = 2 * std::numbers::pi;
  const int count = std::max(3, static_cast<int>(std::lround(two_pi / yaw_step)));
  const double step = two_pi / count;
  std::vector<double> yaws(count), scores(count);
  std::vector<Vec3> ts(count);
  int best = 0;
  for (int i = 0; i < count; ++i) {
    yaws[i] = normalize_angle(-std::numbers::pi + (i + 1) * step);
    ts[i] = translation_for_yaw(shape3d, shape2d, k, yaws[i]);
    scores[i] = rmse_or_inf(shape3d, shape2d, k, {yaws[i], ts[i]});
    if (scores[i] < scores[best]) best = i;
  }
  PoseSolution sol;
  sol.pose = {yaws[best], ts[best]};
  sol.reproj_rmse = scores[best];
  sol.iterations = count;
  sol.converged = std::isfinite(sol.reproj_rmse);

  const double fm = scores[(best + count - 1) % count], f0 = scores[best], fp = scores[(best + 1) % count];
  const double denom = fm - 2 * f0 + fp;
  if (std::isfinite(denom) && denom > 0) {
    const double offset = std::clamp(0.5 * (fm - fp) / denom, -0.5, 0.5) * step;
    const double yaw = normalize_angle(yaws[best] + offset);
    const Vec3 t = translation_for_yaw(shape3d, shape2d, k, yaw);
    const double e = rmse_or_inf(shape3d, shape2d, k, {yaw, t});
    if (e < sol.reproj_rmse) {
      sol.pose = {yaw, t};
      sol.reproj_rmse = e;
    }
  }
  sol.rotation = rotation_yaw(sol.pose.yaw);
  return sol;
}

PoseSolution solve_pose(const Points3& shape3d, const Points2& shape2d, const CameraIntrinsics& k,
                        const PnPOptions& opts) {
  opts.validate();
  if (shape3d.cols() < opts.required_points()) throw DegenerateConfiguration("pose: too few correspondences");
  const PoseSolution init = solve_epnp(shape3d, shape2d, k);
  if (opts.mode == PnPMode::full_6dof) return init;
  return refine_yaw_pose(shape3d, shape2d, k, init.pose, opts);
}

}  // namespace partlift
