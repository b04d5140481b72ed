#pragma once

#include "percam/body_model.hpp"
#include "percam/types.hpp"

namespace percam {

// Weighted-sum coefficients for the training loss.
struct LossWeights {
  double shape = 1.0;
  double pose = 1.0;
  double joint = 5.0;
  double vert = 5.0;
};

struct LossParts {
  double shape = 0;
  double pose = 0;
  double joint = 0;
  double vert = 0;
};

// (1 / tz_gt) * |tz - tz_gt|; scale-invariant in (tz, tz_gt). tz_gt must be > 0.
double l_depth(double tz, double tz_gt);

// Mean absolute difference over shape coefficients.
double l_shape(const VecXRef& beta, const VecXRef& beta_gt);

// Mean geodesic rotation angle between per-joint rotations (radians);
// representation-independent via rotation matrices.
double l_pose(const Pose& pose, const Pose& pose_gt);

// Mean absolute coordinate difference over all entries (L1 / (rows * 3)).
double l_joint(const Points3Ref& joints, const Points3Ref& joints_gt);
double l_vert(const Points3Ref& vertices, const Points3Ref& vertices_gt);

double total_loss(const LossParts& parts, const LossWeights& weights = {});

}  // namespace percam
