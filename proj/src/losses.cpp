#include "percam/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "percam/rotation.hpp"

namespace percam {

namespace {

void check_same_shape(Eigen::Index a_rows, Eigen::Index a_cols,
                      Eigen::Index b_rows, Eigen::Index b_cols,
                      const char* what) {
  if (a_rows != b_rows || a_cols != b_cols)
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

double l_depth(double tz, double tz_gt) {
  if (!(tz_gt > 0) || !std::isfinite(tz_gt))
    throw std::invalid_argument("l_depth: tz_gt must be finite and > 0");
  return std::abs(tz - tz_gt) / tz_gt;
}

double l_shape(const VecXRef& beta, const VecXRef& beta_gt) {
  check_same_shape(beta.size(), 1, beta_gt.size(), 1, "l_shape");
  if (beta.size() == 0) throw std::invalid_argument("l_shape: empty shape vectors");
  return (beta - beta_gt).cwiseAbs().mean();
}

double l_pose(const Pose& pose, const Pose& pose_gt) {
  check_same_shape(pose.joint_rotations.rows(), 3,
                   pose_gt.joint_rotations.rows(), 3, "l_pose");
  const Eigen::Index k = pose.joint_rotations.rows();
  if (k == 0) throw std::invalid_argument("l_pose: empty poses");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const Mat3 r = rodrigues(pose.joint_rotations.row(j).transpose());
    const Mat3 r_gt = rodrigues(pose_gt.joint_rotations.row(j).transpose());
    sum += geodesic_angle(r, r_gt);
  }
  return sum / static_cast<double>(k);
}

double l_joint(const Points3Ref& joints, const Points3Ref& joints_gt) {
  check_same_shape(joints.rows(), joints.cols(), joints_gt.rows(),
                   joints_gt.cols(), "l_joint");
  if (joints.rows() == 0) throw std::invalid_argument("l_joint: empty joint sets");
  return (joints - joints_gt).cwiseAbs().mean();
}

double l_vert(const Points3Ref& vertices, const Points3Ref& vertices_gt) {
  check_same_shape(vertices.rows(), vertices.cols(), vertices_gt.rows(),
                   vertices_gt.cols(), "l_vert");
  if (vertices.rows() == 0) throw std::invalid_argument("l_vert: empty vertex sets");
  return (vertices - vertices_gt).cwiseAbs().mean();
}

double total_loss(const LossParts& parts, const LossWeights& weights) {
  return weights.shape * parts.shape + weights.pose * parts.pose +
         weights.joint * parts.joint + weights.vert * parts.vert;
}

}  // namespace percam
