#pragma once

#include "percam/types.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace percam {

// Axis-angle (angle = |aa|) to rotation matrix. Exact identity for |aa| = 0.
inline Mat3 rodrigues(const Vec3& aa) {
  double angle = aa.norm();
  if (angle < 1e-12) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

// Matrix log as axis-angle with angle in [0, pi].
inline Vec3 axis_angle_from_matrix(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

// Reduce the angle mod 2*pi into [0, pi], flipping the axis when needed, so
// the magnitude is always < 2*pi (and minimal) while the rotation is unchanged.
inline Vec3 canonicalize_axis_angle(const Vec3& aa) {
  double angle = aa.norm();
  if (angle < 1e-12) return Vec3::Zero();
  Vec3 axis = aa / angle;
  angle = std::fmod(angle, 2.0 * M_PI);
  if (angle > M_PI) {
    angle = 2.0 * M_PI - angle;
    axis = -axis;
  }
  return angle * axis;
}

// Geodesic distance on SO(3): rotation angle of ra * rb^T, in [0, pi].
inline double geodesic_angle(const Mat3& ra, const Mat3& rb) {
  double c = ((ra * rb.transpose()).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace percam
